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

#include "ccrank/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

#include "ccrank/error.hpp"
#include "ccrank/ops.hpp"

namespace ccrank {

namespace {

constexpr double kKmPerDegLat = 111.195;

int uniform_int(std::mt19937_64& rng, int n) {
  return std::min(n - 1, static_cast<int>(ops::uniform01(rng) * n));
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * ops::uniform01(rng);
}

std::vector<LatLon> cluster_layout(const SynthSpec& s, std::mt19937_64& rng, int clusters) {
  const double half = s.extent_deg / 2.0;
  const double coslat = std::cos(s.center_lat * std::numbers::pi / 180.0);
  std::vector<LatLon> pois(static_cast<std::size_t>(s.pois));
  LatLon centre{};
  for (int p = 0; p < s.pois; ++p) {
    if (p % s.cluster_size == 0 || p / s.cluster_size >= clusters)
      centre = {s.center_lat + uniform(rng, -half, half),
                s.center_lon + uniform(rng, -half, half)};
    // Uniform in a disc of the cluster radius.
    const double r = s.cluster_radius_km * std::sqrt(ops::uniform01(rng));
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    pois[static_cast<std::size_t>(p)] = {
        centre.lat + r * std::sin(a) / kKmPerDegLat,
        centre.lon + r * std::cos(a) / (kKmPerDegLat * coslat)};
  }
  return pois;
}

std::vector<CheckIn> anchors(const SynthSpec& s, std::mt19937_64& rng) {
  const int clusters = s.pois / s.cluster_size;
  const std::vector<LatLon> poi = cluster_layout(s, rng, clusters);
  // Slot centres in hours after midnight, UTC.
  const double slot_hour[3] = {8.5, 12.5, 19.0};
  std::vector<CheckIn> out;
  for (int u = 0; u < s.users; ++u) {
    int anchor[3];
    for (int k = 0; k < 3; ++k) {
      bool dup = true;
      while (dup) {
        anchor[k] = uniform_int(rng, clusters);
        dup = false;
        for (int m = 0; m < k; ++m) dup |= anchor[m] == anchor[k];
      }
    }
    for (int n = 0; n < s.length; ++n) {
      const int day = n / 3, slot = n % 3;
      const double hour = slot_hour[slot] + uniform(rng, -0.75, 0.75);
      const Seconds t = s.start + static_cast<Seconds>(day) * 86400 +
                        static_cast<Seconds>(std::llround(hour * 3600.0));
      const int p = anchor[slot] * s.cluster_size + uniform_int(rng, s.cluster_size);
      const LatLon& c = poi[static_cast<std::size_t>(p)];
      out.push_back({u + 1, p + 1, t, c.lat, c.lon});
    }
  }
  return out;
}

std::vector<CheckIn> cycle(const SynthSpec& s, std::mt19937_64& rng) {
  const double half = s.extent_deg / 2.0;
  std::vector<LatLon> poi(static_cast<std::size_t>(s.pois));
  for (auto& p : poi)
    p = {s.center_lat + uniform(rng, -half, half), s.center_lon + uniform(rng, -half, half)};
  std::vector<CheckIn> out;
  for (int u = 0; u < s.users; ++u) {
    // Routes tile the POI range so every POI belongs to some user.
    const int first = (u * s.route_len) % s.pois;
    Seconds t = s.start + static_cast<Seconds>(uniform_int(rng, 86400));
    for (int n = 0; n < s.length; ++n) {
      const int p = (first + n % s.route_len) % s.pois;
      const LatLon& c = poi[static_cast<std::size_t>(p)];
      out.push_back({u + 1, p + 1, t, c.lat, c.lon});
      t += 3 * 3600 + static_cast<Seconds>(uniform_int(rng, 3600)) - 1800;
    }
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  if (users < 1 || pois < 1 || length < 1)
    throw ConfigError("synth: users, pois and length must be >= 1");
  if (mode == SynthMode::kAnchors) {
    if (cluster_size < 1 || pois / cluster_size < 3)
      throw ConfigError("synth: anchors mode needs at least 3 clusters of cluster_size POIs");
  } else if (route_len < 1 || route_len > pois) {
    throw ConfigError("synth: route_len must be in 1..pois");
  }
  if (!(extent_deg > 0.0) || !(cluster_radius_km >= 0.0))
    throw ConfigError("synth: extent and radius must be positive");
  if (std::abs(center_lat) + extent_deg > 89.0)
    throw ConfigError("synth: centre too close to a pole");
}

const char* synth_mode_name(SynthMode mode) {
  return mode == SynthMode::kCycle ? "cycle" : "anchors";
}

SynthMode parse_synth_mode(const std::string& name) {
  if (name == "anchors") return SynthMode::kAnchors;
  if (name == "cycle") return SynthMode::kCycle;
  throw ConfigError("synth mode must be 'anchors' or 'cycle', got '" + name + "'");
}

std::vector<CheckIn> synthesize(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  return spec.mode == SynthMode::kCycle ? cycle(spec, rng) : anchors(spec, rng);
}

void write_checkins(std::ostream& out, std::span<const CheckIn> checkins) {
  char buf[128];
  for (const CheckIn& c : checkins) {
    std::snprintf(buf, sizeof buf, "%d,%d,%lld,%.8f,%.8f\n", c.user, c.poi,
                  static_cast<long long>(c.timestamp), c.lat, c.lon);
    out << buf;
  }
}

}  // namespace ccrank
