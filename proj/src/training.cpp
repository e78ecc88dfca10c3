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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "ccrank/error.hpp"

namespace ccrank {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
  if (k_negatives < 1) throw ConfigError("train: k_negatives must be >= 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ConfigError("train: label_smoothing must be in [0, 1)");
  if (!(w_explore >= 1.0)) throw ConfigError("train: w_explore must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (val_pool_size < 2) throw ConfigError("train: val_pool_size must be >= 2");
}

// ---- negative sampling -----------------------------------------------------

PopularitySampler::PopularitySampler(std::span<const std::int64_t> popularity, bool add_one) {
  weight_.assign(popularity.size(), 0.0);
  cdf_.assign(popularity.size(), 0.0);
  double total = 0.0;
  for (std::size_t p = 1; p < popularity.size(); ++p) {
    require(popularity[p] >= 0, "sampler: negative popularity");
    weight_[p] = static_cast<double>(popularity[p]) + (add_one ? 1.0 : 0.0);
    eligible_ += weight_[p] > 0.0 ? 1 : 0;
    total += weight_[p];
    cdf_[p] = total;
  }
}

PoiId PopularitySampler::draw(std::mt19937_64& rng) const {
  const double x = ops::uniform01(rng) * cdf_.back();
  const auto it = std::upper_bound(cdf_.begin() + 1, cdf_.end(), x);
  if (it == cdf_.end()) return static_cast<PoiId>(cdf_.size() - 1);
  return static_cast<PoiId>(it - cdf_.begin());
}

std::vector<PoiId> PopularitySampler::sample(PoiId positive, int k, std::mt19937_64& rng) const {
  require(k >= 0, "sampler: k must be >= 0");
  const bool pos_weighted = positive >= 1 &&
                            static_cast<std::size_t>(positive) < weight_.size() &&
                            weight_[static_cast<std::size_t>(positive)] > 0.0;
  const int available = eligible_ - (pos_weighted ? 1 : 0);
  if (available < k)
    throw SamplingError("negative sampling: need " + std::to_string(k) +
                        " POIs besides the positive, only " + std::to_string(available) +
                        " have nonzero popularity");
  std::vector<PoiId> out;
  out.reserve(static_cast<std::size_t>(k));
  std::vector<std::uint8_t> taken(weight_.size(), 0);
  if (positive >= 0 && static_cast<std::size_t>(positive) < taken.size())
    taken[static_cast<std::size_t>(positive)] = 1;

  // Rejection against the full distribution is exact for successive draws;
  // give up on it when most of the mass is already excluded.
  const std::size_t budget = 32 * static_cast<std::size_t>(k) + 256;
  std::size_t tries = 0;
  while (out.size() < static_cast<std::size_t>(k) && tries < budget) {
    ++tries;
    const PoiId p = draw(rng);
    if (taken[static_cast<std::size_t>(p)] || weight_[static_cast<std::size_t>(p)] <= 0.0)
      continue;
    taken[static_cast<std::size_t>(p)] = 1;
    out.push_back(p);
  }
  while (out.size() < static_cast<std::size_t>(k)) {
    double rest = 0.0;
    for (std::size_t p = 1; p < weight_.size(); ++p) rest += taken[p] ? 0.0 : weight_[p];
    double x = ops::uniform01(rng) * rest;
    std::size_t pick = 0;
    for (std::size_t p = 1; p < weight_.size(); ++p) {
      if (taken[p] || weight_[p] <= 0.0) continue;
      pick = p;
      if (x < weight_[p]) break;
      x -= weight_[p];
    }
    taken[pick] = 1;
    out.push_back(static_cast<PoiId>(pick));
  }
  return out;
}

std::vector<PoiId> sample_negatives(PoiId positive, std::span<const std::int64_t> popularity,
                                    int k, std::mt19937_64& rng) {
  return PopularitySampler(popularity).sample(positive, k, rng);
}

// ---- loss ------------------------------------------------------------------

LossResult ce_loss(std::span<const double> scores, double eps, double weight) {
  const std::size_t C = scores.size();
  require(C >= 2, "ce_loss: need at least two scores");
  require(eps >= 0.0 && eps < 1.0, "ce_loss: eps must be in [0, 1)");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericFault("ce_loss: non-finite score");
  const std::size_t top =
      static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  const double m = scores[top];
  double rest = 0.0;
  for (std::size_t j = 0; j < C; ++j)
    if (j != top) rest += std::exp(scores[j] - m);
  const double lse = std::log1p(rest);  // log-sum-exp minus m

  LossResult r;
  r.grad.resize(C);
  const double off = eps / static_cast<double>(C - 1);
  const double denom = 1.0 + rest;
  for (std::size_t j = 0; j < C; ++j) {
    const double y = j == 0 ? 1.0 - eps : off;
    if (y != 0.0) r.loss += y * ((m - scores[j]) + lse);
    const double p = (j == top ? 1.0 : std::exp(scores[j] - m)) / denom;
    r.grad[j] = weight * (p - y);
  }
  r.loss *= weight;
  return r;
}

// ---- optimizer -------------------------------------------------------------

void optimizer_step(ParamTable& params, const AdamWConfig& c) {
  ++params.step;
  const double t = static_cast<double>(params.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [name, p] : params) {
    Tensor& m = p.first_moment;
    Tensor& v = p.second_moment;
    if (!m.same_shape(p.value)) m = Tensor(p.value.shape());
    if (!v.same_shape(p.value)) v = Tensor(p.value.shape());
    const std::size_t skip = p.frozen_row0 ? p.value.cols() : 0;
    const double shrink = p.decay ? 1.0 - c.lr * c.weight_decay : 1.0;
    for (std::size_t i = skip; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mh = m[i] / bc1, vh = v[i] / bc2;
      p.value[i] = p.value[i] * shrink - c.lr * mh / (std::sqrt(vh) + c.eps);
    }
  }
}

// ---- training loop ---------------------------------------------------------

TrainInstance make_train_instance(std::span<const CheckIn> sequence, std::size_t t,
                                  std::size_t history_len, const DatasetStats& stats,
                                  std::span<const LatLon> poi_coords,
                                  const PopularitySampler& sampler, int k,
                                  std::mt19937_64& rng) {
  require(t >= 1 && t < sequence.size(), "make_train_instance: position out of range");
  TrainInstance in;
  in.history = make_history(sequence.first(t), history_len, stats);
  in.positive = sequence[t].poi;
  std::vector<PoiId> ids{in.positive};
  const std::vector<PoiId> neg = sampler.sample(in.positive, k, rng);
  ids.insert(ids.end(), neg.begin(), neg.end());
  in.slate = make_slate(ids, poi_coords);
  in.is_explore = std::find(in.history.poi_ids.begin(), in.history.poi_ids.end(),
                            in.positive) == in.history.poi_ids.end();
  return in;
}

std::string format_epoch(const EpochRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "epoch=%d train_loss=%.17g val_hr5=%.17g val_hr10=%.17g val_ndcg5=%.17g "
                "val_ndcg10=%.17g val_mrr=%.17g",
                r.epoch, r.train_loss, r.val_hr5, r.val_hr10, r.val_ndcg5, r.val_ndcg10,
                r.val_mrr);
  return buf;
}

namespace {

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = std::min(
        i - 1, static_cast<std::size_t>(ops::uniform01(rng) * static_cast<double>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

TrainResult train(const SplitDataset& split, const ModelConfig& model_config,
                  const TrainConfig& config, std::ostream* log_out) {
  config.validate();
  ModelConfig mc = model_config;
  if (mc.num_pois == 0) mc.num_pois = split.stats.num_pois;
  if (mc.num_pois != split.stats.num_pois)
    throw ConfigError("train: model num_pois " + std::to_string(mc.num_pois) +
                      " differs from dataset " + std::to_string(split.stats.num_pois));
  const Model model(mc);
  if (split.train_size() == 0) throw EmptyDatasetError("train: empty train split");

  const PopularitySampler sampler(split.stats.popularity, config.add_one_smoothing);
  if (sampler.eligible() - 1 < config.k_negatives)
    throw SamplingError("train: k_negatives=" + std::to_string(config.k_negatives) +
                        " exceeds the " + std::to_string(sampler.eligible() - 1) +
                        " POIs available as negatives");
  const InstanceSet train_set = make_train_set(split);
  if (train_set.instances.empty())
    throw EmptyDatasetError("train: no user has three or more train check-ins");
  const InstanceSet val_set = make_validation_set(split);
  const std::size_t L = static_cast<std::size_t>(mc.history_len);

  EvalContext vctx;
  vctx.stats = &split.stats;
  vctx.poi_coords = split.poi_coords;
  vctx.num_pois = mc.num_pois;
  vctx.history_len = L;
  const PoolConfig vpool{PoolMode::kSampled, std::min(config.val_pool_size, mc.num_pois),
                         config.seed ^ 0x5bd1e995ULL};

  ParamTable params = model.init_params(config.seed);
  std::mt19937_64 rng(config.seed + 1);
  const AdamWConfig opt{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};

  TrainResult result;
  result.best = {mc, split.stats, params};
  double best_mrr = -1.0;
  int bad_epochs = 0;

  std::vector<std::size_t> order(train_set.instances.size());
  std::iota(order.begin(), order.end(), 0);

  auto run_epoch = [&](int epoch, bool update) {
    if (update) shuffle(order, rng);
    double total = 0.0;
    std::size_t done = 0;
    ForwardCache cache;
    const ForwardContext ctx{update, &rng, &cache};
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      if (update) params.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const InstanceRef r = train_set.instances[order[b]];
        const TrainInstance in = make_train_instance(
            train_set.sequences[static_cast<std::size_t>(r.user)], r.position, L, split.stats,
            split.poi_coords, sampler, config.k_negatives, rng);
        const std::vector<double> s = model.forward(in.history, in.slate, params, ctx);
        const LossResult loss = ce_loss(s, config.label_smoothing,
                                        in.is_explore ? config.w_explore : 1.0);
        if (!std::isfinite(loss.loss)) throw NumericFault("train: non-finite loss");
        total += loss.loss;
        ++done;
        if (update) model.backward(cache, loss.grad, params);
      }
      if (!update) continue;
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& [name, p] : params)
        for (double& g : p.grad.values()) g *= scale;
      optimizer_step(params, opt);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(done);
    if (!val_set.instances.empty()) {
      const RankReport v = evaluate(val_set, model_scorer(model, params), vctx, vpool);
      rec.val_hr5 = v.hr5;
      rec.val_hr10 = v.hr10;
      rec.val_ndcg5 = v.ndcg5;
      rec.val_ndcg10 = v.ndcg10;
      rec.val_mrr = v.mrr;
    }
    return rec;
  };

  for (int epoch = 0; epoch <= config.max_epochs; ++epoch) {
    EpochRecord rec;
    try {
      rec = run_epoch(epoch, epoch > 0);
    } catch (const NumericFault& e) {
      result.diverged = true;
      result.stop_reason = std::string("diverged: ") + e.what();
      break;
    }
    result.log.push_back(rec);
    if (log_out) *log_out << format_epoch(rec) << '\n' << std::flush;
    if (rec.val_mrr > best_mrr) {
      best_mrr = rec.val_mrr;
      result.best.params = params;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else if (epoch > 0 && ++bad_epochs >= config.patience && config.patience > 0) {
      result.stop_reason = "early stop: no validation MRR gain for " +
                           std::to_string(config.patience) + " epochs";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max epochs reached";
  return result;
}

}  // namespace ccrank
