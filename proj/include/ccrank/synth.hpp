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

#include "ccrank/ingest.hpp"

namespace ccrank {

enum class SynthMode {
  // POIs come in tight spatial clusters. Each user has a morning, midday and
  // evening anchor cluster and visits a random member of the slot's anchor,
  // three times a day. The next POI is predictable from place and time.
  kAnchors,
  // Each user walks a fixed private route of `route_len` POIs round and
  // round, every few hours. The next POI is a function of the last one.
  kCycle,
};

struct SynthSpec {
  SynthMode mode = SynthMode::kAnchors;
  int users = 100;
  int pois = 400;
  int length = 60;        // check-ins per user
  int cluster_size = 10;  // anchors mode
  int route_len = 2;      // cycle mode
  double center_lat = 40.75;
  double center_lon = -73.98;
  double extent_deg = 0.3;        // side of the square holding cluster centres
  double cluster_radius_km = 0.2;
  Seconds start = 1333238400;  // 2012-04-01 00:00 UTC
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

const char* synth_mode_name(SynthMode mode);
SynthMode parse_synth_mode(const std::string& name);  // "anchors" | "cycle"

// Check-ins in user order, chronological within a user. Source ids are
// user 1..users and POI 1..pois.
std::vector<CheckIn> synthesize(const SynthSpec& spec);

// `user,poi,timestamp,lat,lon` lines readable by parse_checkins.
void write_checkins(std::ostream& out, std::span<const CheckIn> checkins);

}  // namespace ccrank
