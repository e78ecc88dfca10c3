// Copyright 2026 The ccrank Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ccrank/geo_time.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <ctime>
#include <numbers>
#include <random>

namespace ccrank {
namespace {

// Independent great-circle distance via the atan2 of cross and dot products of
// unit vectors; well conditioned for every separation.
double vector_distance_km(double lat1, double lon1, double lat2, double lon2) {
  const double k = std::numbers::pi / 180.0;
  const double a[3] = {std::cos(lat1 * k) * std::cos(lon1 * k),
                       std::cos(lat1 * k) * std::sin(lon1 * k), std::sin(lat1 * k)};
  const double b[3] = {std::cos(lat2 * k) * std::cos(lon2 * k),
                       std::cos(lat2 * k) * std::sin(lon2 * k), std::sin(lat2 * k)};
  const double cx = a[1] * b[2] - a[2] * b[1];
  const double cy = a[2] * b[0] - a[0] * b[2];
  const double cz = a[0] * b[1] - a[1] * b[0];
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return 6371.0 * std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

template <typename T, std::size_t N>
int linear_scan_bucket(const std::array<T, N>& edges, T value) {
  int b = 0;
  for (T e : edges)
    if (value >= e) ++b;
  return b;
}

TEST(Haversine, Examples) {
  EXPECT_EQ(haversine_km(40.71, -74.00, 40.71, -74.00), 0.0);
  const double one_degree = 2.0 * std::numbers::pi * 6371.0 / 360.0;
  EXPECT_NEAR(haversine_km(0, 0, 0, 1), one_degree, 1e-9);
  EXPECT_NEAR(haversine_km(0, 0, 0, 1), 111.195, 111.195 * 1e-4);
  EXPECT_NEAR(haversine_km(0, 0, 90, 0), std::numbers::pi * 6371.0 / 2.0, 1e-9);
  EXPECT_NEAR(haversine_km(0, 0, 90, 0), 10007.54, 10007.54 * 1e-4);
}

TEST(Haversine, SymmetryTriangleAndOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int n = 0; n < 20000; ++n) {
    const double a1 = lat(rng), o1 = lon(rng), a2 = lat(rng), o2 = lon(rng),
                 a3 = lat(rng), o3 = lon(rng);
    const double ab = haversine_km(a1, o1, a2, o2);
    EXPECT_EQ(ab, haversine_km(a2, o2, a1, o1));
    EXPECT_GE(ab, 0.0);
    const double ac = haversine_km(a1, o1, a3, o3), cb = haversine_km(a3, o3, a2, o2);
    EXPECT_LE(ab, ac + cb + 1e-9);
    const double ref = vector_distance_km(a1, o1, a2, o2);
    EXPECT_LE(std::abs(ab - ref), 1e-9 * ref + 1e-12);
  }
}

TEST(TimeFeatures, Examples) {
  EXPECT_EQ(time_features(0).hour, 0);
  EXPECT_EQ(time_features(0).weekday, 3);
  EXPECT_EQ(time_features(86400).hour, 0);
  EXPECT_EQ(time_features(86400).weekday, 4);
  EXPECT_EQ(time_features(3599).hour, 0);
  EXPECT_EQ(time_features(3599).weekday, 3);
  EXPECT_EQ(time_features(3600).hour, 1);
}

TEST(TimeFeatures, MatchesCalendarAndIsWeekPeriodic) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<Seconds> ts(0, 2'000'000'000);
  for (int n = 0; n < 20000; ++n) {
    const Seconds t = ts(rng);
    const std::time_t tt = static_cast<std::time_t>(t);
    std::tm cal{};
    gmtime_r(&tt, &cal);
    const TimeFeatures f = time_features(t);
    EXPECT_EQ(f.hour, cal.tm_hour);
    EXPECT_EQ(f.weekday, (cal.tm_wday + 6) % 7);
    EXPECT_EQ(time_features(t + 7 * 86400).weekday, f.weekday);
  }
}

TEST(TimeGap, ClampsNegative) {
  EXPECT_EQ(time_gap(100, 100), 0);
  EXPECT_EQ(time_gap(100, 7300), 7200);
  EXPECT_EQ(time_gap(200, 100), 0);
}

TEST(Buckets, Examples) {
  EXPECT_EQ(bucketize_time(0), 0);
  EXPECT_EQ(bucketize_time(7200), 1);
  EXPECT_EQ(bucketize_time(1'000'000'000), 5);
  EXPECT_EQ(bucketize_time(3599), 0);
  EXPECT_EQ(bucketize_time(3600), 1);  // edge belongs to the upper bucket
  EXPECT_EQ(bucketize_time(2592000), 5);
  EXPECT_EQ(bucketize_dist(0.05), 0);
  EXPECT_EQ(bucketize_dist(1.0), 2);
  EXPECT_EQ(bucketize_dist(50.0), 4);
  EXPECT_EQ(bucketize_dist(0.1), 1);
  EXPECT_EQ(bucketize_dist(10.0), 4);
}

TEST(Buckets, AgreeWithLinearScanAndAreMonotone) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<Seconds> ts(0, 5'000'000);
  std::uniform_real_distribution<double> km(0.0, 20.0);
  for (int n = 0; n < 100000; ++n) {
    const Seconds a = ts(rng), b = ts(rng);
    EXPECT_EQ(bucketize_time(a), linear_scan_bucket(kTimeBucketEdges, a));
    if (a <= b) EXPECT_LE(bucketize_time(a), bucketize_time(b));
    const double x = km(rng), y = km(rng);
    EXPECT_EQ(bucketize_dist(x), linear_scan_bucket(kDistBucketEdges, x));
    if (x <= y) EXPECT_LE(bucketize_dist(x), bucketize_dist(y));
  }
}

}  // namespace
}  // namespace ccrank
