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

#include "ccrank/verify.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <vector>

#include "ccrank/evaluation.hpp"
#include "ccrank/geo_time.hpp"
#include "ccrank/grad_check.hpp"
#include "ccrank/model.hpp"
#include "ccrank/training.hpp"

namespace ccrank {

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Toy {
  ModelConfig config;
  DatasetStats stats;
  std::vector<LatLon> coords;
  std::vector<CheckIn> events;
};

Toy toy(std::uint64_t seed, std::size_t n_events) {
  std::mt19937_64 rng(seed);
  Toy t;
  t.config.num_pois = 12;
  t.config.d = 8;
  t.config.heads = 2;
  t.config.layers = 1;
  t.config.history_len = 6;
  t.config.ffn_hidden = 16;
  t.config.head_hidden = 8;
  t.config.dropout = 0.0;
  t.stats.mu_lat = 40.75;
  t.stats.mu_lon = -73.98;
  t.stats.sigma_lat = t.stats.sigma_lon = 0.05;
  t.coords.assign(13, LatLon{});
  for (std::size_t p = 1; p < 13; ++p) {
    const double s = p % 3 == 0 ? 0.004 : (p % 3 == 1 ? 0.03 : 0.2);
    t.coords[p] = {40.75 + s * (ops::uniform01(rng) - 0.5), -73.98 + s * (ops::uniform01(rng) - 0.5)};
  }
  Seconds ts = 1400000000;
  for (std::size_t i = 0; i < n_events; ++i) {
    ts += 900 + static_cast<Seconds>(ops::uniform01(rng) * 400000.0);
    const PoiId p = 1 + static_cast<PoiId>(ops::uniform01(rng) * 12) % 12;
    t.events.push_back({0, p, ts, t.coords[static_cast<std::size_t>(p)].lat,
                        t.coords[static_cast<std::size_t>(p)].lon});
  }
  return t;
}

// Initial values plus N(0, 0.2) noise, so gains stay near one and tables and
// biases are non-zero.
void perturb(ParamTable& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto& [name, p] : params) {
    for (double& v : p.value.values()) v += n(rng);
    if (p.frozen_row0)
      for (double& v : p.value.row(0)) v = 0.0;
  }
}

// Smallest |pre-activation| of the location ReLU over real positions. A
// finite difference that straddles the kink measures nothing useful.
double relu_margin(const ForwardCache& cache) {
  double m = std::numeric_limits<double>::infinity();
  const Tensor& pre = cache.embed.loc_pre;
  for (std::size_t r = 0; r < pre.rows(); ++r)
    if (!cache.pad_mask[r])
      for (double x : pre.row(r)) m = std::min(m, std::abs(x));
  return m;
}

// Whether every candidate sees at least two time buckets and two distance
// buckets among the real history positions. A bucket shared by a whole row
// shifts all of that row's logits equally, so its gradient there is exactly
// zero and a finite difference can only measure roundoff.
bool buckets_vary(const ForwardCache& cache, std::size_t candidates) {
  const std::size_t len = cache.pad_mask.size();
  std::set<int> times;
  for (std::size_t i = 0; i < len; ++i)
    if (!cache.pad_mask[i]) times.insert(cache.bias.time_bucket[i]);
  if (times.size() < 2) return false;
  for (std::size_t j = 0; j < candidates; ++j) {
    std::set<int> dists;
    for (std::size_t i = 0; i < len; ++i)
      if (!cache.pad_mask[i]) dists.insert(cache.bias.dist_bucket[j * len + i]);
    if (dists.size() < 2) return false;
  }
  return true;
}

Outcome gradient_check(const VerifyOptions& o) {
  const std::vector<PoiId> ids = {3, 7, 1, 12};
  ModelConfig config = toy(0, 0).config;
  const Model m(config);

  // Redraw until the test point is away from the ReLU kink and the bias
  // tables are identifiable.
  Toy t;
  PaddedHistory h;
  CandidateSlate c;
  ParamTable p;
  ForwardCache cache;
  for (std::uint64_t draw = 0;; ++draw) {
    const std::uint64_t s = o.seed * 1000003 + draw;
    t = toy(s, 4);
    h = make_history(t.events, 6, t.stats);
    c = make_slate(ids, t.coords);
    p = m.init_params(s);
    perturb(p, s + 1);
    m.forward(h, c, p, {false, nullptr, &cache});
    if (relu_margin(cache) > 2e-2 && buckets_vary(cache, ids.size())) break;
  }

  p.zero_grad();
  // Uneven weights: a cross-entropy loss would leave the output bias with an
  // exactly zero gradient, which finite differences only see as roundoff.
  const std::vector<double> w = {0.7, -1.3, 0.4, 1.1};
  m.backward(cache, w, p);
  if (!o.corrupt_param.empty()) {
    if (!p.contains(o.corrupt_param))
      return {false, "unknown parameter for --corrupt: " + o.corrupt_param};
    const Param& q = p.at(o.corrupt_param);
    double& g = p.grad(o.corrupt_param)[q.frozen_row0 ? q.value.cols() : 0];
    g = g * 1.5 + 1e-3;
  }
  const auto loss = [&](const ParamTable& q) {
    const auto sq = m.forward(h, c, q);
    double l = 0.0;
    for (std::size_t i = 0; i < sq.size(); ++i) l += w[i] * sq[i];
    return l;
  };
  GradCheckOptions gc;
  gc.eps = 1e-3;
  gc.extrapolate = true;
  const GradCheckReport r = grad_check(loss, p, gc);
  std::string worst_name;
  double worst = 0.0;
  bool ok = true;
  for (const auto& [name, err] : r.max_rel_error) {
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
    ok &= err < 1e-4;
  }
  return {ok, "worst=" + worst_name + fmt(" rel_err=%.3g", worst) +
                  " groups=" + std::to_string(r.max_rel_error.size())};
}

Outcome bucket_oracle(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed);
  int bad = 0;
  for (int i = 0; i < 100000; ++i) {
    // Log-uniform draws so every bucket, and the edges, get traffic.
    const Seconds dt = static_cast<Seconds>(std::exp(ops::uniform01(rng) * 16.0)) - 1;
    const double dist = std::max(0.0, std::exp(ops::uniform01(rng) * 12.0 - 5.0) - 0.0067);
    int bt = 0, bd = 0;
    for (Seconds e : kTimeBucketEdges) bt += dt >= e ? 1 : 0;
    for (double e : kDistBucketEdges) bd += dist >= e ? 1 : 0;
    bad += (bucketize_time(dt) != bt) + (bucketize_dist(dist) != bd);
  }
  for (Seconds e : kTimeBucketEdges) bad += bucketize_time(e) != bucketize_time(e - 1) + 1;
  for (double e : kDistBucketEdges) bad += bucketize_dist(e) != bucketize_dist(std::nextafter(e, 0.0)) + 1;
  return {bad == 0, "mismatches=" + std::to_string(bad) + " of 200009"};
}

// Great-circle distance from the angle between unit vectors.
double chord_angle_km(double lat1, double lon1, double lat2, double lon2) {
  const double r = std::numbers::pi / 180.0;
  const double a[3] = {std::cos(lat1 * r) * std::cos(lon1 * r),
                       std::cos(lat1 * r) * std::sin(lon1 * r), std::sin(lat1 * r)};
  const double b[3] = {std::cos(lat2 * r) * std::cos(lon2 * r),
                       std::cos(lat2 * r) * std::sin(lon2 * r), std::sin(lat2 * r)};
  const double cx = a[1] * b[2] - a[2] * b[1], cy = a[2] * b[0] - a[0] * b[2],
               cz = a[0] * b[1] - a[1] * b[0];
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return kEarthRadiusKm * std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

Outcome haversine_oracle(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed + 7);
  double worst = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double la1 = ops::uniform01(rng) * 170 - 85, lo1 = ops::uniform01(rng) * 360 - 180;
    const double la2 = ops::uniform01(rng) * 170 - 85, lo2 = ops::uniform01(rng) * 360 - 180;
    const double a = haversine_km(la1, lo1, la2, lo2), b = chord_angle_km(la1, lo1, la2, lo2);
    if (b > 1e-3) worst = std::max(worst, std::abs(a - b) / b);
  }
  const double one_deg = haversine_km(0, 0, 0, 1), quarter = haversine_km(0, 0, 90, 0);
  const bool refs = std::abs(one_deg - 111.195) / 111.195 < 1e-4 &&
                    std::abs(quarter - 10007.54) / 10007.54 < 1e-4;
  return {worst < 1e-9 && refs, fmt("worst_rel=%.3g", worst) + fmt(" one_degree_km=%.6f", one_deg) +
                                     fmt(" quarter_km=%.3f", quarter)};
}

Outcome masking(const VerifyOptions& o) {
  const Toy t = toy(o.seed + 3, 3);
  ModelConfig cfg = t.config;
  cfg.layers = 2;
  const Model m(cfg);
  ParamTable p = m.init_params(o.seed);
  perturb(p, o.seed + 4);
  const std::vector<PoiId> ids = {1, 2, 5, 9};
  const CandidateSlate c = make_slate(ids, t.coords);
  const PaddedHistory h6 = make_history(t.events, 6, t.stats);
  double mass = 0.0;
  for (const Tensor& w : m.attention_dump(h6, c, p).layers) {
    const std::size_t L = 6, rows = w.size() / L;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < L; ++i)
        if (h6.pad_mask[i]) mass = std::max(mass, w[r * L + i]);
  }
  const auto a = m.forward(h6, c, p), b = m.forward(make_history(t.events, 11, t.stats), c, p);
  double diff = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) diff = std::max(diff, std::abs(a[j] - b[j]));
  return {mass < 1e-6 && diff <= 1e-9, fmt("max_padded_weight=%.3g", mass) +
                                           fmt(" padding_score_shift=%.3g", diff)};
}

Outcome kernels_agree(const VerifyOptions& o) {
  const Toy t = toy(o.seed + 5, 9);
  ModelConfig par = t.config, ser = t.config;
  ser.parallel_kernels = false;
  const Model a(par), b(ser);
  ParamTable p = a.init_params(o.seed);
  perturb(p, o.seed + 6);
  const std::vector<PoiId> ids = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  const CandidateSlate c = make_slate(ids, t.coords);
  const PaddedHistory h = make_history(t.events, 6, t.stats);
  const auto x = a.forward(h, c, p), y = b.forward(h, c, p);
  double diff = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) diff = std::max(diff, std::abs(x[j] - y[j]));
  return {diff <= 1e-12, fmt("max_score_diff=%.3g", diff)};
}

Outcome metric_examples(const VerifyOptions&) {
  const bool ok = metrics_at_k(1, 5).ndcg == 1.0 && metrics_at_k(3, 10).ndcg == 0.5 &&
                  metrics_at_k(11, 10).hr == 0.0 &&
                  mrr(std::vector<int>{1, 2, 4}) == 1.75 / 3.0 &&
                  rank_of_positive(std::vector<double>{1, 1, 0}) == 2;
  return {ok, "examples=5"};
}

}  // namespace

VerifySummary run_verify(const VerifyOptions& options, std::ostream& out) {
  const std::vector<std::pair<const char*, std::function<Outcome(const VerifyOptions&)>>> checks = {
      {"gradient", gradient_check},         {"buckets", bucket_oracle},
      {"haversine", haversine_oracle},      {"masking", masking},
      {"kernels", kernels_agree},           {"metrics", metric_examples},
  };
  VerifySummary s;
  for (const auto& [name, fn] : checks) {
    Outcome r;
    try {
      r = fn(options);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    (r.ok ? s.passed : s.failed) += 1;
    out << (r.ok ? "PASS " : "FAIL ") << name << ' ' << r.detail << '\n';
  }
  return s;
}

}  // namespace ccrank
