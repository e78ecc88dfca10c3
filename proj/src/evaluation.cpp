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

#include "ccrank/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>

#include "ccrank/error.hpp"

namespace ccrank {

namespace {

// Collects the first exception thrown inside a parallel region.
class FirstError {
 public:
  template <class F>
  void run(F&& f) noexcept {
    try {
      f();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!err_) err_ = std::current_exception();
    }
  }
  void rethrow() {
    if (err_) std::rethrow_exception(err_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr err_;
};

struct Sums {
  std::size_t count = 0;
  double hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0, rr = 0;

  void add(int rank) {
    const Metrics m5 = metrics_at_k(rank, 5), m10 = metrics_at_k(rank, 10);
    ++count;
    hr5 += m5.hr;
    ndcg5 += m5.ndcg;
    hr10 += m10.hr;
    ndcg10 += m10.ndcg;
    rr += 1.0 / rank;
  }
  StratumMetrics finish(std::string name) const {
    StratumMetrics s;
    s.name = std::move(name);
    s.count = count;
    if (count == 0) return s;
    const double n = static_cast<double>(count);
    s.hr5 = hr5 / n;
    s.hr10 = hr10 / n;
    s.ndcg5 = ndcg5 / n;
    s.ndcg10 = ndcg10 / n;
    s.mrr = rr / n;
    return s;
  }
};

// Quartile edges (nearest-rank at 25/50/75%) of `values`.
std::array<double, 3> quartile_edges(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::array<double, 3> e{};
  for (int q = 0; q < 3; ++q) {
    const double pos = 0.25 * (q + 1) * static_cast<double>(values.size() - 1);
    e[static_cast<std::size_t>(q)] = values[static_cast<std::size_t>(std::floor(pos))];
  }
  return e;
}

int quartile_of(double v, const std::array<double, 3>& edges) {
  int q = 0;
  while (q < 3 && v > edges[static_cast<std::size_t>(q)]) ++q;
  return q;
}

bool ids_in_range(std::span<const CheckIn> seq, std::size_t pos, std::size_t window,
                  int num_pois) {
  if (seq[pos].poi < 1 || seq[pos].poi > num_pois) return false;
  const std::size_t from = pos > window ? pos - window : 0;
  for (std::size_t i = from; i < pos; ++i)
    if (seq[i].poi < 1 || seq[i].poi > num_pois) return false;
  return true;
}

void check_context(const EvalContext& ctx) {
  require(ctx.stats != nullptr, "evaluate: stats required");
  require(ctx.num_pois >= 1, "evaluate: num_pois must be >= 1");
  require(ctx.poi_coords.size() > static_cast<std::size_t>(ctx.num_pois),
          "evaluate: poi_coords shorter than num_pois + 1");
  require(ctx.history_len >= 1, "evaluate: history_len must be >= 1");
}

// Scores the pool for instance i; returns an empty vector for skipped ones.
std::vector<double> score_instance(const InstanceSet& set, std::size_t i, const Scorer& scorer,
                                   const EvalContext& ctx, const PoolConfig& pool) {
  const InstanceRef r = set.instances[i];
  const auto& seq = set.sequences.at(static_cast<std::size_t>(r.user));
  require(r.position >= 1 && r.position < seq.size(), "evaluate: bad instance position");
  if (!ids_in_range(seq, r.position, ctx.history_len, ctx.num_pois)) return {};
  std::mt19937_64 rng = instance_rng(pool.seed, i);
  const std::vector<PoiId> ids = build_eval_pool(seq[r.position].poi, ctx.num_pois, pool, rng);
  const CandidateSlate slate = make_slate(ids, ctx.poi_coords);
  const PaddedHistory h = make_history(std::span(seq).first(r.position), ctx.history_len,
                                       *ctx.stats);
  std::vector<double> s = scorer(i, h, slate);
  require(s.size() == ids.size(), "evaluate: scorer returned wrong length");
  for (double v : s)
    if (!std::isfinite(v)) throw NumericFault("evaluate: non-finite score");
  return s;
}

void append_strata(RankReport& rep, const InstanceSet& set, const EvalContext& ctx) {
  const char* qname[4] = {"q1", "q2", "q3", "q4"};
  if (!ctx.user_train_counts.empty()) {
    std::vector<double> counts(ctx.user_train_counts.begin(), ctx.user_train_counts.end());
    const auto edges = quartile_edges(counts);
    std::array<Sums, 4> sums;
    for (std::size_t n = 0; n < rep.ranks.size(); ++n) {
      const UserId u = set.instances[rep.instance[n]].user;
      const double c = static_cast<double>(ctx.user_train_counts[static_cast<std::size_t>(u)]);
      sums[static_cast<std::size_t>(quartile_of(c, edges))].add(rep.ranks[n]);
    }
    for (int q = 0; q < 4; ++q)
      rep.user_strata.push_back(
          sums[static_cast<std::size_t>(q)].finish(std::string("user_") + qname[q]));
  }
  const auto& pop = ctx.stats->popularity;
  if (pop.size() > static_cast<std::size_t>(ctx.num_pois)) {
    std::vector<double> freq(pop.begin() + 1, pop.begin() + 1 + ctx.num_pois);
    const auto edges = quartile_edges(freq);
    std::array<Sums, 4> sums;
    for (std::size_t n = 0; n < rep.ranks.size(); ++n) {
      const InstanceRef r = set.instances[rep.instance[n]];
      const PoiId p = set.sequences[static_cast<std::size_t>(r.user)][r.position].poi;
      sums[static_cast<std::size_t>(quartile_of(static_cast<double>(pop[static_cast<std::size_t>(p)]),
                                                edges))]
          .add(rep.ranks[n]);
    }
    for (int q = 0; q < 4; ++q)
      rep.poi_strata.push_back(
          sums[static_cast<std::size_t>(q)].finish(std::string("poi_") + qname[q]));
  }
}

}  // namespace

const char* pool_mode_name(PoolMode mode) {
  return mode == PoolMode::kFull ? "full" : "sampled";
}

PoolMode parse_pool_mode(const std::string& name) {
  if (name == "sampled") return PoolMode::kSampled;
  if (name == "full") return PoolMode::kFull;
  throw ConfigError("pool mode must be 'sampled' or 'full', got '" + name + "'");
}

std::vector<PoiId> build_eval_pool(PoiId positive, int num_pois, const PoolConfig& pool,
                                   std::mt19937_64& rng) {
  if (positive < 1 || positive > num_pois)
    throw PoolError("eval pool: positive " + std::to_string(positive) + " outside 1.." +
                    std::to_string(num_pois));
  std::vector<PoiId> others;
  others.reserve(static_cast<std::size_t>(num_pois - 1));
  for (PoiId p = 1; p <= num_pois; ++p)
    if (p != positive) others.push_back(p);

  std::vector<PoiId> ids{positive};
  if (pool.mode == PoolMode::kFull) {
    ids.insert(ids.end(), others.begin(), others.end());
    return ids;
  }
  if (pool.size < 1 || pool.size > num_pois)
    throw PoolError("eval pool: size " + std::to_string(pool.size) + " needs 1.." +
                    std::to_string(num_pois));
  const std::size_t k = static_cast<std::size_t>(pool.size - 1);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t span = others.size() - i;
    const std::size_t j = i + static_cast<std::size_t>(ops::uniform01(rng) * static_cast<double>(span));
    std::swap(others[i], others[std::min(j, others.size() - 1)]);
    ids.push_back(others[i]);
  }
  return ids;
}

std::mt19937_64 instance_rng(std::uint64_t seed, std::uint64_t instance) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(instance),
                    static_cast<std::uint32_t>(instance >> 32)};
  return std::mt19937_64(seq);
}

Metrics metrics_at_k(int rank, int k) {
  require(rank >= 1, "metrics_at_k: rank must be >= 1");
  if (rank > k) return {};
  return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

double mrr(std::span<const int> ranks) {
  require(!ranks.empty(), "mrr: no ranks");
  double s = 0.0;
  for (int r : ranks) {
    require(r >= 1, "mrr: rank must be >= 1");
    s += 1.0 / r;
  }
  return s / static_cast<double>(ranks.size());
}

int rank_of_positive(std::span<const double> scores) {
  require(!scores.empty(), "rank_of_positive: empty scores");
  int rank = 1;
  for (std::size_t j = 1; j < scores.size(); ++j) rank += scores[j] >= scores[0] ? 1 : 0;
  return rank;
}

InstanceSet make_eval_set(const SplitDataset& split) {
  InstanceSet s;
  s.sequences.resize(split.train.size());
  for (std::size_t u = 0; u < split.train.size(); ++u) {
    auto& seq = s.sequences[u];
    seq = split.train[u];
    seq.insert(seq.end(), split.eval[u].begin(), split.eval[u].end());
    for (std::size_t e = 0; e < split.eval[u].size(); ++e) {
      const std::size_t pos = split.train[u].size() + e;
      if (pos >= 1)
        s.instances.push_back({static_cast<UserId>(u), static_cast<std::uint32_t>(pos)});
    }
  }
  return s;
}

InstanceSet make_validation_set(const SplitDataset& split) {
  InstanceSet s;
  s.sequences = split.train;
  for (std::size_t u = 0; u < split.train.size(); ++u)
    if (split.train[u].size() >= 2)
      s.instances.push_back(
          {static_cast<UserId>(u), static_cast<std::uint32_t>(split.train[u].size() - 1)});
  return s;
}

InstanceSet make_train_set(const SplitDataset& split) {
  InstanceSet s;
  s.sequences = split.train;
  for (std::size_t u = 0; u < split.train.size(); ++u)
    for (std::size_t t = 1; t + 1 < split.train[u].size(); ++t)
      s.instances.push_back({static_cast<UserId>(u), static_cast<std::uint32_t>(t)});
  return s;
}

Scorer model_scorer(const Model& model, const ParamTable& params) {
  return [&model, &params](std::size_t, const PaddedHistory& h, const CandidateSlate& c) {
    return model.forward(h, c, params);
  };
}

RankReport evaluate(const InstanceSet& set, const Scorer& scorer, const EvalContext& ctx,
                    const PoolConfig& pool) {
  check_context(ctx);
  require(!set.instances.empty(), "evaluate: no instances");
  const std::size_t n = set.instances.size();
  std::vector<int> rank(n, 0);
  FirstError err;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    err.run([&] {
      const std::vector<double> s = score_instance(set, i, scorer, ctx, pool);
      if (!s.empty()) rank[i] = rank_of_positive(s);
    });
  }
  err.rethrow();

  RankReport rep;
  rep.mode = pool.mode;
  rep.pool_size = pool.mode == PoolMode::kFull ? ctx.num_pois : pool.size;
  Sums all;
  for (std::size_t i = 0; i < n; ++i) {
    if (rank[i] == 0) {
      ++rep.skipped;
      continue;
    }
    rep.ranks.push_back(rank[i]);
    rep.instance.push_back(i);
    all.add(rank[i]);
  }
  const StratumMetrics m = all.finish("all");
  rep.hr5 = m.hr5;
  rep.hr10 = m.hr10;
  rep.ndcg5 = m.ndcg5;
  rep.ndcg10 = m.ndcg10;
  rep.mrr = m.mrr;
  if (!rep.ranks.empty()) append_strata(rep, set, ctx);
  return rep;
}

std::vector<SweepPoint> pool_size_sweep(const InstanceSet& set, const Scorer& scorer,
                                        const EvalContext& ctx, std::span<const int> sizes,
                                        std::uint64_t seed) {
  check_context(ctx);
  require(!sizes.empty(), "pool_size_sweep: no sizes");
  for (int s : sizes)
    if (s < 1 || s > ctx.num_pois)
      throw PoolError("pool_size_sweep: size " + std::to_string(s) + " needs 1.." +
                      std::to_string(ctx.num_pois));
  const PoolConfig largest{PoolMode::kSampled, *std::max_element(sizes.begin(), sizes.end()),
                           seed};
  const std::size_t n = set.instances.size();
  std::vector<std::vector<int>> rank(n);
  FirstError err;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    err.run([&] {
      const std::vector<double> s = score_instance(set, i, scorer, ctx, largest);
      if (s.empty()) return;
      for (int size : sizes)
        rank[i].push_back(rank_of_positive(std::span(s).first(static_cast<std::size_t>(size))));
    });
  }
  err.rethrow();

  std::vector<SweepPoint> out;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    double hits = 0.0;
    std::size_t counted = 0;
    for (const auto& r : rank) {
      if (r.empty()) continue;
      hits += metrics_at_k(r[k], 10).hr;
      ++counted;
    }
    out.push_back({sizes[k], counted ? hits / static_cast<double>(counted) : 0.0});
  }
  return out;
}

namespace {

void put(std::ostream& out, const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << key << '=' << buf << '\n';
}

void put_stratum(std::ostream& out, const StratumMetrics& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "stratum,%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                s.name.c_str(), s.count, s.hr5, s.hr10, s.ndcg5, s.ndcg10, s.mrr);
  out << buf;
}

}  // namespace

void write_report(std::ostream& out, const RankReport& r) {
  out << "pool_mode=" << pool_mode_name(r.mode) << '\n';
  out << "pool_size=" << r.pool_size << '\n';
  out << "instances=" << r.ranks.size() << '\n';
  out << "skipped=" << r.skipped << '\n';
  put(out, "hr5", r.hr5);
  put(out, "hr10", r.hr10);
  put(out, "ndcg5", r.ndcg5);
  put(out, "ndcg10", r.ndcg10);
  put(out, "mrr", r.mrr);
  out << "# stratum,name,count,hr5,hr10,ndcg5,ndcg10,mrr\n";
  for (const auto& s : r.user_strata) put_stratum(out, s);
  for (const auto& s : r.poi_strata) put_stratum(out, s);
}

void write_rank_dump(std::ostream& out, const RankReport& r, const InstanceSet& set) {
  out << "instance,user,position,positive,rank\n";
  for (std::size_t n = 0; n < r.ranks.size(); ++n) {
    const InstanceRef ref = set.instances[r.instance[n]];
    out << r.instance[n] << ',' << ref.user << ',' << ref.position << ','
        << set.sequences[static_cast<std::size_t>(ref.user)][ref.position].poi << ','
        << r.ranks[n] << '\n';
  }
}

void write_sweep(std::ostream& out, std::span<const SweepPoint> sweep) {
  out << "pool_size,hr10\n";
  char buf[64];
  for (const auto& p : sweep) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", p.size, p.hr10);
    out << buf;
  }
}

}  // namespace ccrank
