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

#include <random>
#include <vector>

#include "ccrank/ingest.hpp"
#include "ccrank/model.hpp"

namespace ccrank::testing {

constexpr double kBaseLat = 40.75;
constexpr double kBaseLon = -73.98;

inline DatasetStats toy_stats(int num_pois) {
  DatasetStats s;
  s.mu_lat = kBaseLat;
  s.sigma_lat = 0.05;
  s.mu_lon = kBaseLon;
  s.sigma_lon = 0.05;
  s.num_pois = num_pois;
  s.num_users = 1;
  s.popularity.assign(static_cast<std::size_t>(num_pois) + 1, 1);
  s.popularity[0] = 0;
  return s;
}

// POI coordinates scattered from a few metres to ~20 km around the base, so
// every distance bucket is reachable. Index 0 is the padding slot.
inline std::vector<LatLon> toy_poi_coords(int num_pois, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.12, 0.12);
  std::vector<LatLon> c(static_cast<std::size_t>(num_pois) + 1, LatLon{});
  for (int p = 1; p <= num_pois; ++p) {
    const double scale = (p % 4 == 0) ? 0.005 : (p % 4 == 1 ? 0.02 : 1.0);
    c[static_cast<std::size_t>(p)] = {kBaseLat + scale * u(rng), kBaseLon + scale * u(rng)};
  }
  return c;
}

// Chronological events whose gaps to the last one span every time bucket.
inline std::vector<CheckIn> toy_events(std::size_t n, int num_pois,
                                       const std::vector<LatLon>& coords,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> poi(1, num_pois);
  std::uniform_int_distribution<Seconds> gap(600, 400000);
  std::vector<CheckIn> ev(n);
  Seconds t = 1700000000;
  for (std::size_t i = 0; i < n; ++i) {
    t += gap(rng) * static_cast<Seconds>(1 + (i % 3 == 0 ? 5 : 0));
    const PoiId p = poi(rng);
    ev[i] = {0, p, t, coords[static_cast<std::size_t>(p)].lat,
             coords[static_cast<std::size_t>(p)].lon};
  }
  return ev;
}

inline ModelConfig tiny_config(int num_pois = 12) {
  ModelConfig c;
  c.num_pois = num_pois;
  c.d = 8;
  c.heads = 2;
  c.layers = 1;
  c.history_len = 6;
  c.ffn_hidden = 16;
  c.head_hidden = 8;
  c.dropout = 0.0;
  return c;
}

// Replaces every value (bias tables included) with N(0, scale) draws and
// keeps the padding row of frozen tables at zero.
inline void randomize(ParamTable& params, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [name, p] : params) {
    for (double& v : p.value.values()) v = n(rng);
    if (p.frozen_row0)
      for (double& v : p.value.row(0)) v = 0.0;
  }
}

}  // namespace ccrank::testing
