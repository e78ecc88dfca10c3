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

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ccrank/geo_time.hpp"

namespace ccrank {

using UserId = std::int32_t;
using PoiId = std::int32_t;  // 0 is the padding POI

inline constexpr PoiId kPaddingPoi = 0;

struct CheckIn {
  UserId user = 0;
  PoiId poi = 0;
  Seconds timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const CheckIn&) const = default;
};

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

struct ParsedCheckins {
  std::vector<CheckIn> checkins;      // dense ids, file order
  std::vector<std::int64_t> user_ids; // dense user -> id in the file
  std::vector<std::int64_t> poi_ids;  // dense poi -> id in the file; [0] = -1
};

// Reads `user_id,poi_id,timestamp,lat,lon` lines. Blank lines and lines whose
// first non-space character is '#' are skipped. Dense ids follow ascending
// order of the source ids.
ParsedCheckins parse_checkins(std::istream& in);

struct DatasetStats {
  double mu_lat = 0.0;
  double sigma_lat = 1.0;
  double mu_lon = 0.0;
  double sigma_lon = 1.0;
  // Indexed by POI id; popularity[0] is always 0 (padding is never counted).
  std::vector<std::int64_t> popularity;
  int num_pois = 0;
  int num_users = 0;

  LatLon normalize(double lat, double lon) const {
    return {(lat - mu_lat) / sigma_lat, (lon - mu_lon) / sigma_lon};
  }
};

struct SplitDataset {
  // Indexed by dense user id, chronologically ordered.
  std::vector<std::vector<CheckIn>> train;
  std::vector<std::vector<CheckIn>> eval;
  DatasetStats stats;
  // Indexed by POI id; entry 0 unused.
  std::vector<LatLon> poi_coords;
  // Dense id -> id in the check-ins handed to filter_and_split.
  std::vector<std::int64_t> user_source_ids;
  std::vector<std::int64_t> poi_source_ids;

  std::size_t train_size() const;
  std::size_t eval_size() const;
  // Flattened train + eval, user by user, chronological.
  std::vector<CheckIn> all_checkins() const;
};

// Removes users and POIs below `min_count` check-ins, alternating until a
// fixpoint. Users also need at least holdout + 1 check-ins so every held-out
// event has history. Each user's last `holdout` check-ins (timestamp order,
// ties by input order) go to eval. Ids are re-densified in ascending order.
SplitDataset filter_and_split(std::span<const CheckIn> checkins, int min_count = 10,
                              int holdout = 30);

// Population mean/std of training coordinates and train-only POI counts.
DatasetStats compute_stats(const std::vector<std::vector<CheckIn>>& train,
                           int num_pois);

// Structured-text cache of a split: a key=value header (format, users, pois,
// checkins, mu_lat, sigma_lat, mu_lon, sigma_lon, plus caller metadata),
// then [pois], [users], [train] and [eval] sections of comma-separated rows.
void write_split(std::ostream& out, const SplitDataset& split,
                 const std::vector<std::pair<std::string, std::string>>& meta = {});
SplitDataset read_split(std::istream& in,
                        std::vector<std::pair<std::string, std::string>>* meta = nullptr);

}  // namespace ccrank
