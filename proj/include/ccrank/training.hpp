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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccrank/evaluation.hpp"
#include "ccrank/ingest.hpp"
#include "ccrank/model.hpp"

namespace ccrank {

struct TrainConfig {
  double lr = 1e-3;
  int batch = 64;
  int max_epochs = 50;
  int k_negatives = 99;
  double label_smoothing = 0.0;
  double w_explore = 1.0;
  std::uint64_t seed = 0;
  int patience = 5;
  double weight_decay = 0.01;
  bool add_one_smoothing = false;  // popularity + 1 for every POI
  int val_pool_size = 100;         // clipped to the POI count

  // Throws ConfigError.
  void validate() const;
};

struct TrainInstance {
  PaddedHistory history;
  PoiId positive = 0;
  CandidateSlate slate;  // positive at index 0, then K negatives
  bool is_explore = false;
};

// Draws without replacement with probability proportional to popularity:
// each draw picks among the ids not yet taken, weighted by count.
class PopularitySampler {
 public:
  // popularity is indexed by POI id; entry 0 is ignored.
  explicit PopularitySampler(std::span<const std::int64_t> popularity, bool add_one = false);

  // K distinct ids, none equal to `positive` or 0. Throws SamplingError when
  // fewer than K ids have nonzero weight once the positive is excluded.
  std::vector<PoiId> sample(PoiId positive, int k, std::mt19937_64& rng) const;

  int eligible() const { return eligible_; }

 private:
  PoiId draw(std::mt19937_64& rng) const;

  std::vector<double> weight_;  // [0] = 0
  std::vector<double> cdf_;
  int eligible_ = 0;
};

std::vector<PoiId> sample_negatives(PoiId positive, std::span<const std::int64_t> popularity,
                                    int k, std::mt19937_64& rng);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d score
};

// Softmax cross-entropy against (1 - eps) on index 0 and eps / (C - 1)
// elsewhere, times `weight`. Throws NumericFault on non-finite scores.
LossResult ce_loss(std::span<const double> scores, double eps = 0.0, double weight = 1.0);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One update from the gradients stored in `params`; increments params.step
// first and bias-corrects with it. Decay only touches params with decay set,
// and row 0 of frozen tables never moves.
void optimizer_step(ParamTable& params, const AdamWConfig& config);

// Builds the instance for position t of a user's train sequence.
TrainInstance make_train_instance(std::span<const CheckIn> sequence, std::size_t t,
                                  std::size_t history_len, const DatasetStats& stats,
                                  std::span<const LatLon> poi_coords,
                                  const PopularitySampler& sampler, int k,
                                  std::mt19937_64& rng);

struct EpochRecord {
  int epoch = 0;  // 0 = before any update
  double train_loss = 0.0;
  double val_hr5 = 0, val_hr10 = 0, val_ndcg5 = 0, val_ndcg10 = 0, val_mrr = 0;
};

struct TrainResult {
  Checkpoint best;
  int best_epoch = 0;
  std::vector<EpochRecord> log;
  bool diverged = false;
  std::string stop_reason;
};

// Trains on every train position except each user's last, which forms the
// validation slice. Records are appended to `log_out` as they complete.
TrainResult train(const SplitDataset& split, const ModelConfig& model_config,
                  const TrainConfig& config, std::ostream* log_out = nullptr);

// `epoch=.. train_loss=.. val_hr5=.. val_hr10=.. val_ndcg5=.. val_ndcg10=.. val_mrr=..`
std::string format_epoch(const EpochRecord& r);

}  // namespace ccrank
