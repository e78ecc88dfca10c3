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

#pragma once

#include <array>
#include <cstdint>

namespace ccrank {

using Seconds = std::int64_t;

inline constexpr double kEarthRadiusKm = 6371.0;

// Upper edges of the recency buckets: 1h, 6h, 24h, 7d, 30d (month = 30 days).
inline constexpr std::array<Seconds, 5> kTimeBucketEdges = {
    3600, 21600, 86400, 604800, 2592000};
inline constexpr int kNumTimeBuckets = 6;

// Upper edges of the distance buckets in kilometers.
inline constexpr std::array<double, 4> kDistBucketEdges = {0.1, 0.5, 2.0, 10.0};
inline constexpr int kNumDistBuckets = 5;

// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

struct TimeFeatures {
  int hour = 0;     // 0..23, UTC
  int weekday = 0;  // 0..6, Monday = 0
};

TimeFeatures time_features(Seconds timestamp);

inline Seconds time_gap(Seconds t_i, Seconds t_last) {
  return t_last > t_i ? t_last - t_i : 0;
}

// Half-open buckets; a value equal to an edge falls in the upper bucket.
int bucketize_time(Seconds delta);
int bucketize_dist(double km);

}  // namespace ccrank
