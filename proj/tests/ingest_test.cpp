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

#include "ccrank/ingest.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ccrank/error.hpp"

namespace ccrank {
namespace {

ParsedCheckins parse(const std::string& text) {
  std::istringstream in(text);
  return parse_checkins(in);
}

// ---- parsing ---------------------------------------------------------------

TEST(ParseCheckins, SingleLine) {
  const ParsedCheckins p = parse("7,42,1300000000,40.71,-74.00\n");
  ASSERT_EQ(p.checkins.size(), 1u);
  const CheckIn& c = p.checkins[0];
  EXPECT_EQ(c.user, 0);
  EXPECT_EQ(c.poi, 1);
  EXPECT_EQ(c.timestamp, 1300000000);
  EXPECT_EQ(c.lat, 40.71);
  EXPECT_EQ(c.lon, -74.00);
  EXPECT_EQ(p.user_ids, (std::vector<std::int64_t>{7}));
  EXPECT_EQ(p.poi_ids, (std::vector<std::int64_t>{-1, 42}));
}

TEST(ParseCheckins, EmptyInput) {
  EXPECT_TRUE(parse("").checkins.empty());
  EXPECT_TRUE(parse("\n# comment\n\n").checkins.empty());
}

TEST(ParseCheckins, NonNumericTimestampReportsLine) {
  try {
    parse("7,42,xx,40.71,-74.00\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  try {
    parse("# header\n7,42,1,40.71,-74.00\n7,42\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseCheckins, RejectsBadFields) {
  EXPECT_THROW(parse("7,42,1,40.71,-74.00,9\n"), ParseError);
  EXPECT_THROW(parse("7,42,1,40.71x,-74.00\n"), ParseError);
  EXPECT_THROW(parse("7,42,1,,-74.00\n"), ParseError);
  EXPECT_THROW(parse("7,42,1,91.0,-74.00\n"), ValidationError);
  EXPECT_THROW(parse("7,42,1,40.0,-180.5\n"), ValidationError);
  EXPECT_NO_THROW(parse("7,42,1,-90,180\n"));
}

TEST(ParseCheckins, DenseIdsAreABijectionInSourceOrder) {
  const ParsedCheckins p =
      parse("30,900,1,0,0\n10,5,2,0,0\n20,900,3,0,0\n10,77,4,0,0\n");
  EXPECT_EQ(p.user_ids, (std::vector<std::int64_t>{10, 20, 30}));
  EXPECT_EQ(p.poi_ids, (std::vector<std::int64_t>{-1, 5, 77, 900}));
  std::vector<std::pair<UserId, PoiId>> got;
  for (const auto& c : p.checkins) got.emplace_back(c.user, c.poi);
  EXPECT_EQ(got, (std::vector<std::pair<UserId, PoiId>>{{2, 3}, {0, 1}, {1, 3}, {0, 2}}));
}

// ---- filter and split ------------------------------------------------------

std::vector<CheckIn> user_events(UserId u, std::vector<PoiId> pois, Seconds t0,
                                 double lat = 40.7, double lon = -74.0) {
  std::vector<CheckIn> out;
  for (std::size_t i = 0; i < pois.size(); ++i)
    out.push_back({u, pois[i], t0 + static_cast<Seconds>(i) * 60,
                   lat + 0.001 * static_cast<double>(pois[i]),
                   lon - 0.002 * static_cast<double>(pois[i])});
  return out;
}

// `n_users` users cycling through POIs 1..n_pois, each with `per_user` events.
std::vector<CheckIn> dense_corpus(int n_users, int n_pois, int per_user) {
  std::vector<CheckIn> all;
  for (int u = 0; u < n_users; ++u) {
    std::vector<PoiId> pois;
    for (int i = 0; i < per_user; ++i) pois.push_back(1 + (u + i) % n_pois);
    auto ev = user_events(u, pois, 1000000 + u * 7);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

TEST(FilterAndSplit, FortyCheckinsGiveTenTrainThirtyEval) {
  const auto data = dense_corpus(3, 4, 40);
  const SplitDataset s = filter_and_split(data);
  ASSERT_EQ(s.train.size(), 3u);
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_EQ(s.train[u].size(), 10u);
    EXPECT_EQ(s.eval[u].size(), 30u);
  }
}

TEST(FilterAndSplit, SparseUserIsRemoved) {
  auto data = dense_corpus(3, 4, 40);
  const auto sparse = user_events(9, {1, 2, 3, 4, 1, 2, 3, 4, 1}, 5);
  data.insert(data.end(), sparse.begin(), sparse.end());
  const SplitDataset s = filter_and_split(data, 10, 3);
  EXPECT_EQ(s.train.size(), 3u);
  EXPECT_EQ(std::count(s.user_source_ids.begin(), s.user_source_ids.end(), 9), 0);
}

TEST(FilterAndSplit, SharedPoiAtThresholdIsRetained) {
  // Two users share POI 1 with 12 visits in total (6 + 6). POI 2 gets 4 + 6,
  // so both POIs sit at or above 10 and both users reach 10.
  auto a = user_events(0, {1, 1, 1, 1, 1, 1, 2, 2, 2, 2}, 100);
  auto b = user_events(1, {2, 2, 2, 2, 2, 2, 1, 1, 1, 1, 1, 1}, 200);
  a.insert(a.end(), b.begin(), b.end());
  const SplitDataset s = filter_and_split(a, 10, 2);
  EXPECT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.stats.num_pois, 2);
  EXPECT_EQ(s.train_size() + s.eval_size(), 22u);
}

TEST(FilterAndSplit, RemovalsCascadeToAFixpoint) {
  // User 1 has 9 check-ins and goes first; that leaves POI 3 with 8 visits,
  // so it goes too, which takes user 0 to 20 of its 28 events.
  std::vector<PoiId> p0(8, 3);
  for (int i = 0; i < 10; ++i) {
    p0.push_back(4);
    p0.push_back(6);
  }
  auto data = user_events(0, p0, 0);
  auto u1 = user_events(1, {3, 3, 5, 5, 5, 5, 5, 5, 5}, 10);
  data.insert(data.end(), u1.begin(), u1.end());
  const SplitDataset s = filter_and_split(data, 10, 2);
  ASSERT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.train[0].size() + s.eval[0].size(), 20u);
  EXPECT_EQ(s.stats.num_pois, 2);
  EXPECT_EQ(s.poi_source_ids, (std::vector<std::int64_t>{-1, 4, 6}));
}

TEST(FilterAndSplit, EverythingFilteredIsAnError) {
  EXPECT_THROW(filter_and_split(user_events(0, {1, 2, 3}, 0)), EmptyDatasetError);
  EXPECT_THROW(filter_and_split(std::vector<CheckIn>{}), Error);
}

TEST(FilterAndSplit, TiesKeepInputOrder) {
  std::vector<CheckIn> data;
  for (int i = 0; i < 12; ++i)
    data.push_back({0, 1 + i % 2, 500 + (i < 6 ? 0 : 100), 40.0 + 0.01 * i, -74.0 - 0.01 * i});
  // Two POIs with 6 visits each would fail min_count=10; use min_count=6.
  const SplitDataset s = filter_and_split(data, 6, 3);
  ASSERT_EQ(s.eval[0].size(), 3u);
  EXPECT_DOUBLE_EQ(s.eval[0][0].lat, 40.09);
  EXPECT_DOUBLE_EQ(s.eval[0][2].lat, 40.11);
}

// Random corpus with skewed user activity and POI popularity.
std::vector<CheckIn> random_corpus(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_events(5, 70);
  std::geometric_distribution<int> poi(0.04);
  std::uniform_int_distribution<Seconds> t(0, 10000000);
  std::vector<CheckIn> all;
  for (int u = 0; u < 60; ++u) {
    const int n = n_events(rng);
    for (int i = 0; i < n; ++i) {
      const PoiId p = 1 + std::min(poi(rng), 200);
      all.push_back({u * 3 + 1, p, t(rng) / 60 * 60, 40.7 + 0.001 * p, -74.0 + 0.0007 * p});
    }
  }
  return all;
}

class SplitProperties : public ::testing::TestWithParam<int> {};

TEST_P(SplitProperties, Hold) {
  const auto data = random_corpus(static_cast<std::uint64_t>(GetParam()));
  const SplitDataset s = filter_and_split(data, 10, 5);
  ASSERT_GT(s.train.size(), 0u);

  std::map<PoiId, int> poi_count;
  std::int64_t train_events = 0;
  for (std::size_t u = 0; u < s.train.size(); ++u) {
    const auto& tr = s.train[u];
    const auto& ev = s.eval[u];
    EXPECT_GE(tr.size() + ev.size(), 10u);
    EXPECT_EQ(ev.size(), 5u);
    EXPECT_TRUE(std::is_sorted(tr.begin(), tr.end(),
                               [](auto& a, auto& b) { return a.timestamp < b.timestamp; }));
    EXPECT_LE(tr.back().timestamp, ev.front().timestamp);
    for (const auto* part : {&tr, &ev})
      for (const CheckIn& c : *part) {
        EXPECT_EQ(c.user, static_cast<UserId>(u));
        EXPECT_GE(c.poi, 1);
        EXPECT_LE(c.poi, s.stats.num_pois);
        ++poi_count[c.poi];
      }
    train_events += static_cast<std::int64_t>(tr.size());
  }
  for (const auto& [p, n] : poi_count) EXPECT_GE(n, 10) << p;
  EXPECT_EQ(static_cast<int>(poi_count.size()), s.stats.num_pois);

  // Popularity sums to the train size and ignores the padding slot.
  EXPECT_EQ(s.stats.popularity[0], 0);
  EXPECT_EQ(std::accumulate(s.stats.popularity.begin(), s.stats.popularity.end(),
                            std::int64_t{0}),
            train_events);

  // Source-id maps are injective and ascending.
  EXPECT_TRUE(std::is_sorted(s.user_source_ids.begin(), s.user_source_ids.end()));
  EXPECT_EQ(std::set<std::int64_t>(s.poi_source_ids.begin() + 1, s.poi_source_ids.end()).size(),
            s.poi_source_ids.size() - 1);

  // Fixpoint: splitting the output again reproduces it.
  const SplitDataset again = filter_and_split(s.all_checkins(), 10, 5);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.eval, s.eval);
  EXPECT_EQ(again.stats.popularity, s.stats.popularity);
}

INSTANTIATE_TEST_SUITE_P(Seeds, SplitProperties, ::testing::Range(0, 10));

// ---- statistics ------------------------------------------------------------

TEST(ComputeStats, TwoPointPopulationStd) {
  std::vector<std::vector<CheckIn>> train = {{{0, 1, 0, 0.0, 10.0}, {0, 1, 1, 2.0, 14.0}}};
  const DatasetStats s = compute_stats(train, 1);
  EXPECT_EQ(s.mu_lat, 1.0);
  EXPECT_EQ(s.sigma_lat, 1.0);
  EXPECT_EQ(s.mu_lon, 12.0);
  EXPECT_EQ(s.sigma_lon, 2.0);
}

TEST(ComputeStats, PopularityCountsTrainOnly) {
  std::vector<CheckIn> data;
  // POI 1 appears 5 times in train and 3 in eval for the single user.
  for (int i = 0; i < 5; ++i) data.push_back({0, 1, i, 40.0 + 0.1 * i, -74.0});
  for (int i = 0; i < 5; ++i) data.push_back({0, 2, 10 + i, 40.0, -74.0 + 0.1 * i});
  for (int i = 0; i < 3; ++i) data.push_back({0, 1, 100 + i, 40.0, -74.0});
  const SplitDataset s = filter_and_split(data, 5, 3);
  ASSERT_EQ(s.eval[0].size(), 3u);
  EXPECT_EQ(s.stats.popularity[1], 5);
  EXPECT_EQ(s.stats.popularity[2], 5);
}

TEST(ComputeStats, DegenerateAndEmptyInputs) {
  std::vector<std::vector<CheckIn>> same = {{{0, 1, 0, 1.0, 1.0}, {0, 1, 5, 1.0, 1.0}}};
  EXPECT_THROW(compute_stats(same, 1), DegenerateDatasetError);
  std::vector<std::vector<CheckIn>> flat_lon = {{{0, 1, 0, 1.0, 1.0}, {0, 1, 5, 2.0, 1.0}}};
  EXPECT_THROW(compute_stats(flat_lon, 1), DegenerateDatasetError);
  EXPECT_THROW(compute_stats({}, 1), EmptyDatasetError);
}

// ---- cache -----------------------------------------------------------------

TEST(SplitCache, RoundTripIsExact) {
  const SplitDataset s = filter_and_split(random_corpus(3), 10, 5);
  std::stringstream buf;
  write_split(buf, s, {{"source", "corpus.txt"}, {"min_count", "10"}});
  std::vector<std::pair<std::string, std::string>> meta;
  const SplitDataset back = read_split(buf, &meta);
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.eval, s.eval);
  EXPECT_EQ(back.user_source_ids, s.user_source_ids);
  EXPECT_EQ(back.poi_source_ids, s.poi_source_ids);
  EXPECT_EQ(back.stats.mu_lat, s.stats.mu_lat);
  EXPECT_EQ(back.stats.sigma_lon, s.stats.sigma_lon);
  EXPECT_EQ(back.stats.popularity, s.stats.popularity);
  ASSERT_EQ(back.poi_coords.size(), s.poi_coords.size());
  for (std::size_t p = 1; p < s.poi_coords.size(); ++p) {
    EXPECT_EQ(back.poi_coords[p].lat, s.poi_coords[p].lat);
    EXPECT_EQ(back.poi_coords[p].lon, s.poi_coords[p].lon);
  }
  const auto has = [&](const std::string& k, const std::string& v) {
    return std::find(meta.begin(), meta.end(), std::make_pair(k, v)) != meta.end();
  };
  EXPECT_TRUE(has("source", "corpus.txt"));
  EXPECT_TRUE(has("min_count", "10"));
}

TEST(SplitCache, RejectsForeignText) {
  std::istringstream in("hello\n");
  EXPECT_THROW(read_split(in), Error);
}

}  // namespace
}  // namespace ccrank
