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

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "ccrank/error.hpp"
#include "ccrank/geo_time.hpp"

namespace ccrank {
namespace {

TEST(Synth, ShapeAndOrder) {
  for (SynthMode mode : {SynthMode::kAnchors, SynthMode::kCycle}) {
    SynthSpec s;
    s.mode = mode;
    s.users = 7;
    s.pois = 40;
    s.length = 20;
    const auto data = synthesize(s);
    ASSERT_EQ(data.size(), 140u);
    for (std::size_t i = 0; i < data.size(); ++i) {
      EXPECT_EQ(data[i].user, static_cast<UserId>(i / 20 + 1));
      EXPECT_GE(data[i].poi, 1);
      EXPECT_LE(data[i].poi, 40);
      if (i % 20) EXPECT_GT(data[i].timestamp, data[i - 1].timestamp);
    }
  }
}

TEST(Synth, SameSeedSameFileDifferentSeedDifferentFile) {
  SynthSpec s;
  s.users = 10;
  std::ostringstream a, b, c;
  write_checkins(a, synthesize(s));
  write_checkins(b, synthesize(s));
  s.seed = 1;
  write_checkins(c, synthesize(s));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Synth, FileRoundTripsThroughParser) {
  SynthSpec s;
  s.users = 5;
  s.length = 12;
  const auto data = synthesize(s);
  std::ostringstream out;
  write_checkins(out, data);
  std::istringstream in(out.str());
  const ParsedCheckins parsed = parse_checkins(in);
  ASSERT_EQ(parsed.checkins.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const CheckIn& p = parsed.checkins[i];
    EXPECT_EQ(parsed.user_ids[static_cast<std::size_t>(p.user)], data[i].user);
    EXPECT_EQ(parsed.poi_ids[static_cast<std::size_t>(p.poi)], data[i].poi);
    EXPECT_EQ(p.timestamp, data[i].timestamp);
    EXPECT_NEAR(p.lat, data[i].lat, 1e-8);
    EXPECT_NEAR(p.lon, data[i].lon, 1e-8);
  }
}

TEST(Synth, PoiCoordinatesAreFixed) {
  SynthSpec s;
  s.users = 30;
  std::map<PoiId, std::pair<double, double>> seen;
  for (const CheckIn& c : synthesize(s)) {
    const auto [it, fresh] = seen.emplace(c.poi, std::make_pair(c.lat, c.lon));
    if (!fresh) {
      EXPECT_EQ(it->second.first, c.lat);
      EXPECT_EQ(it->second.second, c.lon);
    }
  }
}

// Each user visits three clusters, one per time slot, so the visited POI
// depends on the hour and sits within a cluster diameter of the slot's others.
TEST(Synth, AnchorsTieSlotToPlace) {
  SynthSpec s;
  s.users = 20;
  const auto data = synthesize(s);
  for (int u = 0; u < s.users; ++u) {
    std::map<int, std::set<int>> clusters_by_slot;
    std::map<int, std::vector<const CheckIn*>> by_slot;
    for (int n = 0; n < s.length; ++n) {
      const CheckIn& c = data[static_cast<std::size_t>(u * s.length + n)];
      clusters_by_slot[n % 3].insert((c.poi - 1) / s.cluster_size);
      by_slot[n % 3].push_back(&c);
      const int hour = time_features(c.timestamp).hour;
      EXPECT_TRUE(hour >= 7 && hour <= 20) << hour;
    }
    std::set<int> all;
    for (const auto& [slot, cl] : clusters_by_slot) {
      ASSERT_EQ(cl.size(), 1u);
      all.insert(*cl.begin());
    }
    EXPECT_EQ(all.size(), 3u);
    for (const auto& [slot, v] : by_slot)
      for (const CheckIn* c : v)
        EXPECT_LE(haversine_km(c->lat, c->lon, v[0]->lat, v[0]->lon),
                  2 * s.cluster_radius_km + 1e-6);
  }
}

TEST(Synth, CycleRepeatsRoute) {
  SynthSpec s;
  s.mode = SynthMode::kCycle;
  s.users = 6;
  s.pois = 10;
  s.route_len = 3;
  s.length = 9;
  const auto data = synthesize(s);
  for (int u = 0; u < s.users; ++u)
    for (int n = 3; n < s.length; ++n)
      EXPECT_EQ(data[static_cast<std::size_t>(u * 9 + n)].poi,
                data[static_cast<std::size_t>(u * 9 + n - 3)].poi);
  // Routes tile the POI range.
  EXPECT_EQ(data[0].poi, 1);
  EXPECT_EQ(data[9].poi, 4);
  EXPECT_EQ(data[27].poi, 10);
  EXPECT_EQ(data[28].poi, 1);
}

TEST(Synth, RejectsBadSpecs) {
  SynthSpec s;
  s.users = 0;
  EXPECT_THROW(synthesize(s), ConfigError);
  s = {};
  s.pois = 25;  // two clusters of ten
  EXPECT_THROW(synthesize(s), ConfigError);
  s = {};
  s.mode = SynthMode::kCycle;
  s.route_len = 401;
  EXPECT_THROW(synthesize(s), ConfigError);
  EXPECT_THROW(parse_synth_mode("zigzag"), ConfigError);
  EXPECT_EQ(parse_synth_mode(synth_mode_name(SynthMode::kCycle)), SynthMode::kCycle);
}

}  // namespace
}  // namespace ccrank
