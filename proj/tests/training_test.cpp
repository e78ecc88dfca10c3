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

#include "ccrank/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "ccrank/error.hpp"
#include "ccrank/synth.hpp"

namespace ccrank {
namespace {

// ---- negative sampling -----------------------------------------------------

TEST(SampleNegatives, OnlyLegalChoice) {
  const std::vector<std::int64_t> pop = {0, 5, 5};
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i)
    EXPECT_EQ(sample_negatives(1, pop, 1, rng), (std::vector<PoiId>{2}));
}

TEST(SampleNegatives, HeavyPoiDominates) {
  const std::vector<std::int64_t> pop = {0, 999999, 1, 1};
  const PopularitySampler s(pop);
  std::mt19937_64 rng(2);
  int ones = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ones += s.sample(3, 1, rng)[0] == 1;
  EXPECT_GT(ones, 0.99 * n);
}

TEST(SampleNegatives, ExhaustionReturnsEligibleSet) {
  const std::vector<std::int64_t> pop = {0, 3, 0, 7, 1, 2};
  const PopularitySampler s(pop);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto got = s.sample(5, 3, rng);
    EXPECT_EQ(std::set<PoiId>(got.begin(), got.end()), (std::set<PoiId>{1, 3, 4}));
  }
  EXPECT_THROW(s.sample(5, 4, rng), SamplingError);
  EXPECT_THROW(s.sample(2, 5, rng), SamplingError);
  EXPECT_NO_THROW(s.sample(2, 4, rng));  // zero-weight positive frees no slot
}

TEST(SampleNegatives, FallbackWhenPositiveHoldsAlmostAllMass) {
  const std::vector<std::int64_t> pop = {0, 1000000000000LL, 1, 1};
  const PopularitySampler s(pop);
  std::mt19937_64 rng(4);
  const auto got = s.sample(1, 2, rng);
  EXPECT_EQ(std::set<PoiId>(got.begin(), got.end()), (std::set<PoiId>{2, 3}));
}

TEST(SampleNegatives, SuccessiveDrawProbabilities) {
  // Ordered pair (a, b) has probability w_a / W * w_b / (W - w_a).
  const std::vector<std::int64_t> pop = {0, 1, 2, 3, 4};
  const PopularitySampler s(pop);
  std::mt19937_64 rng(5);
  std::map<std::pair<PoiId, PoiId>, int> seen;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const auto v = s.sample(4, 2, rng);
    ++seen[{v[0], v[1]}];
  }
  const double W = 6.0;  // positive 4 excluded
  for (PoiId a = 1; a <= 3; ++a)
    for (PoiId b = 1; b <= 3; ++b) {
      if (a == b) continue;
      const double p = a / W * b / (W - a);
      const double sd = std::sqrt(n * p * (1 - p));
      EXPECT_NEAR(seen[std::make_pair(a, b)], n * p, 5 * sd) << a << "," << b;
    }
}

TEST(SampleNegatives, NeverPositiveNorPadding) {
  std::vector<std::int64_t> pop(31, 0);
  for (std::size_t p = 1; p < pop.size(); ++p) pop[p] = static_cast<std::int64_t>(p * p % 17 + 1);
  const PopularitySampler s(pop);
  std::mt19937_64 rng(6);
  long bad = 0;
  for (int i = 0; i < 1000000; ++i) {
    const PoiId pos = static_cast<PoiId>(1 + i % 30);
    for (PoiId p : s.sample(pos, 1, rng)) bad += (p == pos || p == 0);
  }
  EXPECT_EQ(bad, 0);
}

TEST(SampleNegatives, AddOneSmoothingReachesUnseenPois) {
  const std::vector<std::int64_t> pop = {0, 5, 0, 0};
  EXPECT_THROW(PopularitySampler(pop).sample(1, 1, *std::make_unique<std::mt19937_64>(1)),
               SamplingError);
  const PopularitySampler s(pop, true);
  std::mt19937_64 rng(7);
  const auto got = s.sample(1, 2, rng);
  EXPECT_EQ(std::set<PoiId>(got.begin(), got.end()), (std::set<PoiId>{2, 3}));
}

// ---- loss ------------------------------------------------------------------

TEST(CeLoss, UniformScoresGiveLogC) {
  for (int C : {2, 10, 100}) {
    const std::vector<double> s(static_cast<std::size_t>(C), 0.3);
    EXPECT_NEAR(ce_loss(s).loss, std::log(static_cast<double>(C)), 1e-14);
  }
}

TEST(CeLoss, ClosedFormTwoScores) {
  // -ln sigmoid(20) = ln(1 + e^-20).
  const double expect = std::log1p(std::exp(-20.0));
  EXPECT_NEAR(ce_loss(std::vector<double>{10, -10}).loss, expect, 1e-12 * expect);
  EXPECT_NEAR(expect, 2.06e-9, 0.01e-9);
}

TEST(CeLoss, WeightScalesExactly) {
  const std::vector<double> s = {0.2, 1.5, -0.7, 0.1};
  EXPECT_EQ(ce_loss(s, 0.0, 2.0).loss, 2.0 * ce_loss(s).loss);
  EXPECT_EQ(ce_loss(s, 0.0, 1.0).loss, ce_loss(s).loss);
}

TEST(CeLoss, SmoothedTargetMatchesDirectFormula) {
  const std::vector<double> s = {0.4, -1.0, 2.0, 0.0, 0.3};
  const double eps = 0.1;
  double z = 0.0;
  for (double v : s) z += std::exp(v);
  double expect = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double y = j == 0 ? 1 - eps : eps / 4.0;
    expect -= y * std::log(std::exp(s[j]) / z);
  }
  EXPECT_NEAR(ce_loss(s, eps).loss, expect, 1e-13);
}

TEST(CeLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(7);
    for (double& v : s) v = n(rng);
    const double eps = trial % 2 ? 0.1 : 0.0, w = trial % 3 ? 1.0 : 2.5;
    const LossResult r = ce_loss(s, eps, w);
    for (std::size_t j = 0; j < s.size(); ++j) {
      auto a = s, b = s;
      a[j] += 1e-6;
      b[j] -= 1e-6;
      const double num = (ce_loss(a, eps, w).loss - ce_loss(b, eps, w).loss) / 2e-6;
      EXPECT_NEAR(r.grad[j], num, 1e-7);
    }
  }
}

TEST(CeLoss, PositiveAndFaultsOnNonFinite) {
  EXPECT_GT(ce_loss(std::vector<double>{30, -30, -30}).loss, 0.0);
  EXPECT_THROW(ce_loss(std::vector<double>{1, std::nan("")}), NumericFault);
  EXPECT_THROW(ce_loss(std::vector<double>{1, INFINITY}), NumericFault);
  EXPECT_THROW(ce_loss(std::vector<double>{1}), ContractViolation);
}

// ---- optimizer -------------------------------------------------------------

ParamTable one_param(std::vector<double> v, bool decay = true, bool frozen = false) {
  ParamTable p;
  const std::size_t n = v.size();
  p.add("w", Tensor::from({n}, std::move(v)), decay, frozen);
  return p;
}

TEST(AdamW, ZeroGradientZeroDecayLeavesParams) {
  ParamTable p = one_param({0.5, -2.0, 3.0});
  const Tensor before = p.value("w");
  optimizer_step(p, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(p.value("w"), before);
  EXPECT_EQ(p.step, 1);
}

TEST(AdamW, FirstStepIsSignLike) {
  ParamTable p = one_param({1.0, 1.0, 1.0});
  const std::vector<double> g = {0.3, -4.0, 1e-12};
  for (std::size_t i = 0; i < 3; ++i) p.grad("w")[i] = g[i];
  optimizer_step(p, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  // Bias-corrected m = g and v = g^2 after one step.
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(p.value("w")[i], 1.0 - 1e-3 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
}

TEST(AdamW, DecayShrinksByOneMinusLrLambda) {
  ParamTable p = one_param({2.0, -4.0});
  optimizer_step(p, {1e-2, 0.9, 0.999, 1e-8, 0.1});
  EXPECT_DOUBLE_EQ(p.value("w")[0], 2.0 * (1 - 1e-3));
  EXPECT_DOUBLE_EQ(p.value("w")[1], -4.0 * (1 - 1e-3));
  ParamTable nd = one_param({2.0}, false);
  optimizer_step(nd, {1e-2, 0.9, 0.999, 1e-8, 0.1});
  EXPECT_EQ(nd.value("w")[0], 2.0);
}

TEST(AdamW, FrozenRowZeroNeverMoves) {
  ParamTable p;
  p.add("t", Tensor::from({2, 2}, {0.0, 0.0, 1.0, 1.0}), true, true);
  for (double& g : p.grad("t").values()) g = 1.0;
  optimizer_step(p, {0.1, 0.9, 0.999, 1e-8, 0.5});
  EXPECT_EQ(p.value("t")(0, 0), 0.0);
  EXPECT_EQ(p.value("t")(0, 1), 0.0);
  EXPECT_LT(p.value("t")(1, 0), 1.0);
}

TEST(AdamW, MatchesScalarReferenceOverSeveralSteps) {
  ParamTable p = one_param({0.7});
  const AdamWConfig c{0.01, 0.9, 0.999, 1e-8, 0.05};
  double theta = 0.7, m = 0.0, v = 0.0;
  for (int t = 1; t <= 6; ++t) {
    const double g = std::sin(1.0 + t) * 0.5;
    p.grad("w")[0] = g;
    optimizer_step(p, c);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    theta = theta - c.lr * c.weight_decay * theta - c.lr * mh / (std::sqrt(vh) + c.eps);
    EXPECT_NEAR(p.value("w")[0], theta, 1e-15);
  }
}

// ---- training loop ---------------------------------------------------------

SplitDataset small_split(std::uint64_t seed) {
  SynthSpec s;
  s.mode = SynthMode::kCycle;
  s.users = 20;
  s.pois = 40;
  s.length = 24;
  s.seed = seed;
  return filter_and_split(synthesize(s), 10, 4);
}

ModelConfig small_model() {
  ModelConfig m;
  m.d = 8;
  m.heads = 2;
  m.layers = 1;
  m.history_len = 8;
  m.ffn_hidden = 16;
  m.head_hidden = 8;
  return m;
}

TrainConfig small_train() {
  TrainConfig t;
  t.k_negatives = 9;
  t.max_epochs = 4;
  t.batch = 16;
  t.lr = 3e-3;
  t.seed = 11;
  t.val_pool_size = 20;
  return t;
}

TEST(TrainInstance, PositiveFirstAndExploreFlag) {
  const SplitDataset s = small_split(1);
  const PopularitySampler sampler(s.stats.popularity);
  std::mt19937_64 rng(1);
  const auto& seq = s.train[0];
  const TrainInstance a = make_train_instance(seq, 1, 8, s.stats, s.poi_coords, sampler, 5, rng);
  EXPECT_EQ(a.slate.size(), 6u);
  EXPECT_EQ(a.slate.poi_ids[0], seq[1].poi);
  EXPECT_TRUE(a.is_explore);  // route of two: the second stop is new
  const TrainInstance b = make_train_instance(seq, 2, 8, s.stats, s.poi_coords, sampler, 5, rng);
  EXPECT_FALSE(b.is_explore);
  for (PoiId p : std::span(b.slate.poi_ids).subspan(1)) {
    EXPECT_NE(p, b.positive);
    EXPECT_NE(p, 0);
  }
}

TEST(Train, EpochZeroLossNearUniformBaseline) {
  const SplitDataset s = small_split(2);
  TrainConfig t = small_train();
  t.max_epochs = 0;
  const TrainResult r = train(s, small_model(), t);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_NEAR(r.log[0].train_loss, std::log(10.0), 0.1 * std::log(10.0));
}

TEST(Train, EqualSeedsGiveBitwiseEqualLogs) {
  const SplitDataset s = small_split(3);
  std::ostringstream a, b;
  train(s, small_model(), small_train(), &a);
  train(s, small_model(), small_train(), &b);
  EXPECT_EQ(a.str(), b.str());
  TrainConfig other = small_train();
  other.seed = 12;
  std::ostringstream c;
  train(s, small_model(), other, &c);
  EXPECT_NE(a.str(), c.str());
}

TEST(Train, LossFallsAndBestCheckpointHasBestMrr) {
  const SplitDataset s = small_split(4);
  TrainConfig t = small_train();
  t.max_epochs = 8;
  t.patience = 2;
  const TrainResult r = train(s, small_model(), t);
  ASSERT_GE(r.log.size(), 2u);
  EXPECT_LT(r.log.back().train_loss, r.log.front().train_loss);
  double best = 0.0;
  for (const auto& e : r.log) best = std::max(best, e.val_mrr);
  EXPECT_EQ(r.log[static_cast<std::size_t>(r.best_epoch)].val_mrr, best);

  // Re-scoring the validation slice with the returned parameters agrees.
  const Model m(r.best.config);
  EvalContext ctx;
  ctx.stats = &s.stats;
  ctx.poi_coords = s.poi_coords;
  ctx.num_pois = s.stats.num_pois;
  ctx.history_len = 8;
  const RankReport v = evaluate(make_validation_set(s), model_scorer(m, r.best.params), ctx,
                                {PoolMode::kSampled, 20, t.seed ^ 0x5bd1e995ULL});
  EXPECT_EQ(v.mrr, best);
}

TEST(Train, EarlyStoppingHonoursPatience) {
  const SplitDataset s = small_split(5);
  TrainConfig t = small_train();
  t.max_epochs = 40;
  t.patience = 1;
  const TrainResult r = train(s, small_model(), t);
  EXPECT_LT(r.log.size(), 41u);
  EXPECT_NE(r.stop_reason.find("early stop"), std::string::npos);
  EXPECT_EQ(static_cast<int>(r.log.size()) - 1, r.best_epoch + 1);
}

TEST(Train, DivergenceAbortsWithFiniteCheckpoint) {
  const SplitDataset s = small_split(6);
  TrainConfig t = small_train();
  t.lr = 1e300;
  t.max_epochs = 5;
  const TrainResult r = train(s, small_model(), t);
  EXPECT_TRUE(r.diverged);
  EXPECT_NE(r.stop_reason.find("diverged"), std::string::npos);
  for (const auto& [name, p] : r.best.params)
    for (double v : p.value.values()) ASSERT_TRUE(std::isfinite(v)) << name;
}

TEST(Train, ExploreWeightOfOneIsTheUnweightedLoss) {
  const SplitDataset s = small_split(7);
  TrainConfig a = small_train();
  a.max_epochs = 2;
  TrainConfig b = a;
  b.w_explore = 1.0;  // explicit default
  std::ostringstream la, lb;
  train(s, small_model(), a, &la);
  train(s, small_model(), b, &lb);
  EXPECT_EQ(la.str(), lb.str());
  TrainConfig c = a;
  c.w_explore = 3.0;
  const TrainResult rc = train(s, small_model(), c);
  const TrainResult ra = train(s, small_model(), a);
  EXPECT_GT(rc.log[0].train_loss, ra.log[0].train_loss);
}

TEST(Train, RejectsBadConfigBeforeCompute) {
  const SplitDataset s = small_split(8);
  TrainConfig t = small_train();
  t.k_negatives = 1000;
  EXPECT_THROW(train(s, small_model(), t), SamplingError);
  t = small_train();
  t.label_smoothing = 1.0;
  EXPECT_THROW(train(s, small_model(), t), ConfigError);
  ModelConfig m = small_model();
  m.heads = 3;
  EXPECT_THROW(train(s, m, small_train()), ConfigError);
  m = small_model();
  m.num_pois = 3;
  EXPECT_THROW(train(s, m, small_train()), ConfigError);
}

TEST(Train, FormatEpochIsKeyValue) {
  EpochRecord r;
  r.epoch = 3;
  r.train_loss = 0.5;
  r.val_mrr = 0.25;
  EXPECT_EQ(format_epoch(r),
            "epoch=3 train_loss=0.5 val_hr5=0 val_hr10=0 val_ndcg5=0 val_ndcg10=0 val_mrr=0.25");
}

}  // namespace
}  // namespace ccrank
