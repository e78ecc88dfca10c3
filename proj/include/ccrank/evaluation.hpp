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
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccrank/ingest.hpp"
#include "ccrank/model.hpp"

namespace ccrank {

enum class PoolMode { kSampled, kFull };

struct PoolConfig {
  PoolMode mode = PoolMode::kSampled;
  int size = 100;  // positive included; ignored in full mode
  std::uint64_t seed = 0;
};

const char* pool_mode_name(PoolMode mode);
PoolMode parse_pool_mode(const std::string& name);  // "sampled" | "full"

// Positive at index 0, then negatives. Sampled mode draws size - 1 negatives
// uniformly without replacement from 1..num_pois minus the positive, by a
// partial Fisher-Yates shuffle, so a smaller pool from the same rng state is
// a prefix of a larger one. Full mode lists every other POI in id order.
// Throws PoolError when the request cannot be met.
std::vector<PoiId> build_eval_pool(PoiId positive, int num_pois, const PoolConfig& pool,
                                   std::mt19937_64& rng);

// Per-instance generator: identical for every caller given (seed, instance).
std::mt19937_64 instance_rng(std::uint64_t seed, std::uint64_t instance);

struct Metrics {
  double hr = 0.0;
  double ndcg = 0.0;
};

// rank is 1-based. Throws ContractViolation when rank < 1.
Metrics metrics_at_k(int rank, int k);
double mrr(std::span<const int> ranks);

// 1 + number of negatives scoring at least as high as scores[0].
int rank_of_positive(std::span<const double> scores);

// Prediction points: the event at `position` in `sequences[user]` is the
// target, every earlier event is history.
struct InstanceRef {
  UserId user = 0;
  std::uint32_t position = 0;
};

struct InstanceSet {
  std::vector<std::vector<CheckIn>> sequences;
  std::vector<InstanceRef> instances;
};

// Each held-out event, with all earlier train and eval events as history.
InstanceSet make_eval_set(const SplitDataset& split);
// Last train event of every user with at least two train events.
InstanceSet make_validation_set(const SplitDataset& split);
// Every train event except each user's first and last.
InstanceSet make_train_set(const SplitDataset& split);

// Must be safe to call concurrently and must score each candidate on its own
// (a candidate's score may not depend on the rest of the slate).
using Scorer = std::function<std::vector<double>(std::size_t instance, const PaddedHistory&,
                                                 const CandidateSlate&)>;

Scorer model_scorer(const Model& model, const ParamTable& params);

struct EvalContext {
  const DatasetStats* stats = nullptr;           // normalization + strata
  std::span<const LatLon> poi_coords;            // indexed by POI id
  int num_pois = 0;                              // ids above are skipped
  std::size_t history_len = 100;
  // Train check-in count per user; enables user-activity strata when set.
  std::span<const std::size_t> user_train_counts;
};

struct StratumMetrics {
  std::string name;
  std::size_t count = 0;
  double hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0, mrr = 0;
};

struct RankReport {
  PoolMode mode = PoolMode::kSampled;
  int pool_size = 0;
  std::vector<int> ranks;             // one per scored instance, in input order
  std::vector<std::size_t> instance;  // index into the instance set
  std::size_t skipped = 0;            // instances touching ids outside the model
  double hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0, mrr = 0;
  std::vector<StratumMetrics> user_strata;
  std::vector<StratumMetrics> poi_strata;
};

RankReport evaluate(const InstanceSet& set, const Scorer& scorer, const EvalContext& ctx,
                    const PoolConfig& pool);

struct SweepPoint {
  int size = 0;
  double hr10 = 0.0;
};

// HR@10 for each pool size with shared seeds. Pools are nested, so each
// instance is scored once on the largest pool and smaller pools reuse a prefix.
std::vector<SweepPoint> pool_size_sweep(const InstanceSet& set, const Scorer& scorer,
                                        const EvalContext& ctx, std::span<const int> sizes,
                                        std::uint64_t seed);

// key=value summary lines followed by one `stratum,...` line per stratum.
void write_report(std::ostream& out, const RankReport& report);
// `instance,user,position,positive,rank` rows.
void write_rank_dump(std::ostream& out, const RankReport& report, const InstanceSet& set);
void write_sweep(std::ostream& out, std::span<const SweepPoint> sweep);

}  // namespace ccrank
