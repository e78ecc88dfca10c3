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

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ccrank {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  const double phi1 = lat1 * kDegToRad;
  const double phi2 = lat2 * kDegToRad;
  // Differences in degrees first: exact for nearby points.
  const double sin_dphi = std::sin((lat2 - lat1) * kDegToRad * 0.5);
  const double sin_dlam = std::sin((lon2 - lon1) * kDegToRad * 0.5);
  double a = sin_dphi * sin_dphi +
             std::cos(phi1) * std::cos(phi2) * sin_dlam * sin_dlam;
  a = std::clamp(a, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(a));
}

TimeFeatures time_features(Seconds timestamp) {
  constexpr Seconds kDay = 86400;
  TimeFeatures f;
  f.hour = static_cast<int>((timestamp % kDay) / 3600);
  // 1970-01-01 was a Thursday (Monday = 0).
  f.weekday = static_cast<int>((timestamp / kDay + 3) % 7);
  return f;
}

int bucketize_time(Seconds delta) {
  return static_cast<int>(std::upper_bound(kTimeBucketEdges.begin(),
                                           kTimeBucketEdges.end(), delta) -
                          kTimeBucketEdges.begin());
}

int bucketize_dist(double km) {
  return static_cast<int>(std::upper_bound(kDistBucketEdges.begin(),
                                           kDistBucketEdges.end(), km) -
                          kDistBucketEdges.begin());
}

}  // namespace ccrank
