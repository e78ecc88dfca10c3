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

#include "ccrank/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ccrank/error.hpp"
#include "ccrank/geo_time.hpp"

namespace ccrank {

namespace {

using kernels::AttentionInputs;

void check_finite(const Tensor& t, const std::string& stage) {
  if (!ops::all_finite(t)) throw NumericFault("non-finite values after " + stage);
}

void zero_rows(Tensor& t, std::span<const std::uint8_t> pad) {
  for (std::size_t i = 0; i < pad.size(); ++i)
    if (pad[i]) std::fill(t.row(i).begin(), t.row(i).end(), 0.0);
}

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound,
                      std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = (2.0 * ops::uniform01(rng) - 1.0) * bound;
  return t;
}

void attention_forward(bool parallel, const AttentionInputs& in,
                       kernels::AttentionOutputs& out) {
  if (parallel)
    kernels::attention_forward_parallel(in, out);
  else
    kernels::attention_forward_serial(in, out);
}

void attention_backward(bool parallel, const AttentionInputs& in,
                        const kernels::AttentionOutputs& fwd, const Tensor& dctx,
                        kernels::AttentionGrads& g) {
  if (parallel)
    kernels::attention_backward_parallel(in, fwd, dctx, g);
  else
    kernels::attention_backward_serial(in, fwd, dctx, g);
}

// Key projections carry no bias: it would add the same amount to every logit
// in a row, which softmax ignores.
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw) {
  ops::matmul_at_accumulate(x, dy, dw);
  return ops::matmul_bt(dy, w);
}

// Projection of each bucket row onto the scalar weight vector.
std::vector<double> bucket_scalars(const Tensor& table, const Tensor& proj) {
  std::vector<double> s(table.rows(), 0.0);
  for (std::size_t b = 0; b < table.rows(); ++b)
    for (std::size_t c = 0; c < table.cols(); ++c) s[b] += table(b, c) * proj[c];
  return s;
}

}  // namespace

std::size_t PaddedHistory::real_count() const {
  std::size_t n = 0;
  for (auto m : pad_mask) n += m ? 0 : 1;
  return n;
}

void PaddedHistory::validate() const {
  const std::size_t n = poi_ids.size();
  require(n >= 1, "history: length must be >= 1");
  require(timestamps.size() == n && norm_coords.size() == n && raw_coords.size() == n &&
              pad_mask.size() == n,
          "history: field lengths differ");
  bool seen_real = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!pad_mask[i]) {
      seen_real = true;
      require(poi_ids[i] >= 1, "history: real position with padding id");
    } else {
      require(!seen_real, "history: padding must be a prefix");
      require(poi_ids[i] == kPaddingPoi, "history: padded position with real id");
    }
  }
  require(seen_real, "history: no real position");
  require(t_last == timestamps.back(), "history: t_last must be the last timestamp");
}

PaddedHistory make_history(std::span<const CheckIn> events, std::size_t length,
                           const DatasetStats& stats) {
  require(length >= 1, "make_history: length must be >= 1");
  require(!events.empty(), "make_history: empty event list");
  const std::size_t real = std::min(length, events.size());
  const std::size_t pad = length - real;
  const auto recent = events.subspan(events.size() - real);
  PaddedHistory h;
  h.poi_ids.assign(length, kPaddingPoi);
  h.timestamps.assign(length, 0);
  h.norm_coords.assign(length, LatLon{});
  h.raw_coords.assign(length, LatLon{});
  h.pad_mask.assign(length, 1);
  for (std::size_t r = 0; r < real; ++r) {
    const CheckIn& c = recent[r];
    const std::size_t i = pad + r;
    h.poi_ids[i] = c.poi;
    h.timestamps[i] = c.timestamp;
    h.raw_coords[i] = {c.lat, c.lon};
    h.norm_coords[i] = stats.normalize(c.lat, c.lon);
    h.pad_mask[i] = 0;
  }
  h.t_last = h.timestamps.back();
  return h;
}

void CandidateSlate::validate() const {
  require(!poi_ids.empty(), "slate: at least one candidate required");
  require(coords.size() == poi_ids.size(), "slate: coords length differs");
  for (PoiId p : poi_ids) require(p >= 1, "slate: candidate id must be >= 1");
}

CandidateSlate make_slate(std::span<const PoiId> ids, std::span<const LatLon> poi_coords) {
  CandidateSlate s;
  s.poi_ids.assign(ids.begin(), ids.end());
  s.coords.reserve(ids.size());
  for (PoiId p : ids) {
    require(p >= 1 && static_cast<std::size_t>(p) < poi_coords.size(),
            "make_slate: poi id out of range");
    s.coords.push_back(poi_coords[static_cast<std::size_t>(p)]);
  }
  return s;
}

void ModelConfig::validate() const {
  if (num_pois < 1) throw ConfigError("model: num_pois must be >= 1");
  if (d < 1 || heads < 1) throw ConfigError("model: d and heads must be positive");
  if (d % heads != 0)
    throw ConfigError("model: d=" + std::to_string(d) + " is not divisible by heads=" +
                      std::to_string(heads));
  if (layers < 1) throw ConfigError("model: layers must be >= 1");
  if (history_len < 1) throw ConfigError("model: history_len must be >= 1");
  if (ffn_hidden < 1 || head_hidden < 1) throw ConfigError("model: hidden sizes must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must be in [0, 1)");
}

Tensor positional_encoding(std::size_t length, std::size_t d) {
  Tensor pe = Tensor::matrix(length, d);
  for (std::size_t i = 0; i < length; ++i) {
    const double pos = static_cast<double>(length - 1 - i);
    for (std::size_t c = 0; c < d; c += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(c) / static_cast<double>(d));
      pe(i, c) = std::sin(pos * freq);
      if (c + 1 < d) pe(i, c + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

Model::Model(ModelConfig config) : config_(config) {
  config_.validate();
  for (int l = 0; l < config_.layers; ++l) block_prefix_.push_back("cc" + std::to_string(l) + ".");
}

ParamTable Model::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  const std::size_t d = static_cast<std::size_t>(config_.d);
  const std::size_t rows = static_cast<std::size_t>(config_.num_pois) + 1;
  const std::size_t ff = static_cast<std::size_t>(config_.ffn_hidden);
  const std::size_t hh = static_cast<std::size_t>(config_.head_hidden);
  const double emb = 1.0 / std::sqrt(static_cast<double>(d));
  auto weight = [&](std::size_t in, std::size_t out) {
    return uniform_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  };

  ParamTable p;
  Tensor hist = uniform_tensor({rows, d}, emb, rng);
  std::fill(hist.row(0).begin(), hist.row(0).end(), 0.0);
  p.add("hist.poi_emb", std::move(hist), true, true);
  p.add("cand.poi_emb", uniform_tensor({rows, d}, emb, rng));
  p.add("time.hour_emb", uniform_tensor({24, d}, emb, rng));
  p.add("time.weekday_emb", uniform_tensor({7, d}, emb, rng));
  p.add("loc.w1", weight(2, d));
  p.add("loc.b1", Tensor::vector(d), false);
  p.add("loc.w2", weight(d, d));
  p.add("loc.b2", Tensor::vector(d), false);
  p.add("embed.ln_gain", Tensor::vector(d, 1.0), false);
  p.add("embed.ln_shift", Tensor::vector(d), false);

  for (const char* w : {"hsa.wq", "hsa.wk", "hsa.wv", "hsa.wo"}) p.add(w, weight(d, d));
  for (const char* b : {"hsa.bq", "hsa.bv", "hsa.bo"})
    p.add(b, Tensor::vector(d), false);

  p.add("bias.time_table", Tensor::matrix(kNumTimeBuckets, d), false);
  p.add("bias.time_proj", uniform_tensor({d}, emb, rng));
  p.add("bias.dist_table", Tensor::matrix(kNumDistBuckets, d), false);
  p.add("bias.dist_proj", uniform_tensor({d}, emb, rng));

  for (const auto& s : block_prefix_) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) p.add(s + w, weight(d, d));
    for (const char* b : {"bq", "bv", "bo"}) p.add(s + b, Tensor::vector(d), false);
    p.add(s + "ln1_gain", Tensor::vector(d, 1.0), false);
    p.add(s + "ln1_shift", Tensor::vector(d), false);
    p.add(s + "ffn_w1", weight(d, ff));
    p.add(s + "ffn_b1", Tensor::vector(ff), false);
    p.add(s + "ffn_w2", weight(ff, d));
    p.add(s + "ffn_b2", Tensor::vector(d), false);
    p.add(s + "ln2_gain", Tensor::vector(d, 1.0), false);
    p.add(s + "ln2_shift", Tensor::vector(d), false);
  }

  p.add("head.w1", weight(3 * d, hh));
  p.add("head.b1", Tensor::vector(hh), false);
  p.add("head.w2", weight(hh, 1));
  p.add("head.b2", Tensor::vector(1), false);
  return p;
}

Tensor Model::embed_history(const PaddedHistory& h, const ParamTable& params,
                            EmbedCache* cache) const {
  const std::size_t L = h.length();
  const std::size_t d = static_cast<std::size_t>(config_.d);
  EmbedCache local;
  EmbedCache& c = cache ? *cache : local;
  c.poi_ids.assign(h.poi_ids.begin(), h.poi_ids.end());
  c.hours.resize(L);
  c.weekdays.resize(L);
  c.loc_in = Tensor::matrix(L, 2);
  for (std::size_t i = 0; i < L; ++i) {
    const TimeFeatures f = time_features(h.timestamps[i]);
    c.hours[i] = f.hour;
    c.weekdays[i] = f.weekday;
    if (!h.pad_mask[i]) {
      c.loc_in(i, 0) = h.norm_coords[i].lat;
      c.loc_in(i, 1) = h.norm_coords[i].lon;
    }
  }

  Tensor sum = ops::embed_lookup(params.value("hist.poi_emb"), c.poi_ids);
  ops::add_inplace(sum, positional_encoding(L, d));
  ops::add_inplace(sum, ops::embed_lookup(params.value("time.hour_emb"), c.hours));
  ops::add_inplace(sum, ops::embed_lookup(params.value("time.weekday_emb"), c.weekdays));
  c.loc_pre = ops::affine(c.loc_in, params.value("loc.w1"), params.value("loc.b1"));
  c.loc_act = ops::relu(c.loc_pre);
  ops::add_inplace(sum, ops::affine(c.loc_act, params.value("loc.w2"), params.value("loc.b2")));

  Tensor x = ops::layer_norm(sum, params.value("embed.ln_gain"),
                             params.value("embed.ln_shift"), &c.norm);
  if (cache) c.sum = std::move(sum);
  zero_rows(x, h.pad_mask);
  return x;
}

Tensor Model::history_self_attention(const Tensor& x, std::span<const std::uint8_t> pad_mask,
                                     const ParamTable& params, SelfAttnCache* cache) const {
  const std::size_t L = x.rows();
  SelfAttnCache local;
  SelfAttnCache& c = cache ? *cache : local;
  c.input = x;
  c.q = ops::affine(x, params.value("hsa.wq"), params.value("hsa.bq"));
  c.k = ops::matmul(x, params.value("hsa.wk"));
  c.v = ops::affine(x, params.value("hsa.wv"), params.value("hsa.bv"));
  c.mask.assign(L * L, 0);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) c.mask[i * L + j] = (j > i || pad_mask[j]) ? 1 : 0;
  AttentionInputs in{c.q, c.k, c.v, nullptr, c.mask, config_.heads, 0.0, cache != nullptr};
  attention_forward(config_.parallel_kernels, in, c.attn);
  Tensor out = ops::affine(c.attn.context, params.value("hsa.wo"), params.value("hsa.bo"));
  ops::add_inplace(out, x);
  zero_rows(out, pad_mask);
  return out;
}

Tensor Model::build_bias(const PaddedHistory& h, const CandidateSlate& slate,
                         const ParamTable& params, BiasCache* cache) const {
  const std::size_t L = h.length(), C = slate.size();
  BiasCache local;
  BiasCache& c = cache ? *cache : local;
  c.time_bucket.assign(L, 0);
  for (std::size_t i = 0; i < L; ++i)
    c.time_bucket[i] = bucketize_time(time_gap(h.timestamps[i], h.t_last));
  if (config_.parallel_kernels)
    kernels::distance_buckets_parallel(h.raw_coords, slate.coords, c.dist_bucket);
  else
    kernels::distance_buckets_serial(h.raw_coords, slate.coords, c.dist_bucket);

  std::vector<double> bt(kNumTimeBuckets, 0.0), bs(kNumDistBuckets, 0.0);
  if (config_.use_temporal_bias)
    bt = bucket_scalars(params.value("bias.time_table"), params.value("bias.time_proj"));
  if (config_.use_spatial_bias)
    bs = bucket_scalars(params.value("bias.dist_table"), params.value("bias.dist_proj"));

  Tensor b = Tensor::matrix(C, L);
  for (std::size_t j = 0; j < C; ++j) {
    for (std::size_t i = 0; i < L; ++i) {
      b(j, i) = h.pad_mask[i]
                    ? -ops::kMaskedLogitOffset
                    : bt[static_cast<std::size_t>(c.time_bucket[i])] +
                          bs[static_cast<std::size_t>(c.dist_bucket[j * L + i])];
    }
  }
  return b;
}

Tensor Model::cc_attention_block(int layer, const Tensor& u, const Tensor& x,
                                 const Tensor& bias, std::span<const std::uint8_t> cross_mask,
                                 const ParamTable& params, const ForwardContext& ctx,
                                 BlockCache* cache) const {
  const std::string& s = block_prefix_.at(static_cast<std::size_t>(layer));
  BlockCache local;
  BlockCache& c = cache ? *cache : local;
  c.input = u;
  c.q = ops::affine(u, params.value(s + "wq"), params.value(s + "bq"));
  c.k = ops::matmul(x, params.value(s + "wk"));
  c.v = ops::affine(x, params.value(s + "wv"), params.value(s + "bv"));
  AttentionInputs in{c.q, c.k, c.v, &bias, cross_mask, config_.heads, ops::kLogitClampBound,
                     cache != nullptr};
  attention_forward(config_.parallel_kernels, in, c.attn);

  Tensor r1 = ops::affine(c.attn.context, params.value(s + "wo"), params.value(s + "bo"));
  ops::add_inplace(r1, u);
  c.mid = ops::layer_norm(r1, params.value(s + "ln1_gain"), params.value(s + "ln1_shift"),
                          &c.norm1);

  c.ffn_pre = ops::affine(c.mid, params.value(s + "ffn_w1"), params.value(s + "ffn_b1"));
  c.ffn_act = ops::gelu(c.ffn_pre);
  c.ffn_drop = ops::dropout(c.ffn_act, config_.dropout, ctx.train, ctx.rng, &c.ffn_mask);
  Tensor r2 = ops::affine(c.ffn_drop, params.value(s + "ffn_w2"), params.value(s + "ffn_b2"));
  ops::add_inplace(r2, c.mid);
  return ops::layer_norm(r2, params.value(s + "ln2_gain"), params.value(s + "ln2_shift"),
                         &c.norm2);
}

std::vector<double> Model::forward(const PaddedHistory& h, const CandidateSlate& slate,
                                   const ParamTable& params,
                                   const ForwardContext& ctx) const {
  h.validate();
  slate.validate();
  const std::size_t L = h.length(), C = slate.size();
  const std::size_t d = static_cast<std::size_t>(config_.d);
  for (PoiId p : slate.poi_ids)
    require(p <= config_.num_pois, "forward: candidate id outside model tables");
  for (PoiId p : h.poi_ids)
    require(p <= config_.num_pois, "forward: history id outside model tables");

  ForwardCache local;
  ForwardCache& c = ctx.cache ? *ctx.cache : local;
  c.pad_mask = h.pad_mask;
  c.cand_ids.assign(slate.poi_ids.begin(), slate.poi_ids.end());

  Tensor x = embed_history(h, params, &c.embed);
  check_finite(x, "history embedding");
  if (config_.use_history_self_attn) {
    x = history_self_attention(x, h.pad_mask, params, &c.self_attn);
    check_finite(x, "history self-attention");
  }
  c.history = x;

  c.bias_matrix = build_bias(h, slate, params, &c.bias);
  c.cross_mask.assign(C * L, 0);
  for (std::size_t j = 0; j < C; ++j)
    for (std::size_t i = 0; i < L; ++i) c.cross_mask[j * L + i] = h.pad_mask[i];

  const Tensor cand = ops::embed_lookup(params.value("cand.poi_emb"), c.cand_ids);
  Tensor u = cand;
  c.blocks.assign(static_cast<std::size_t>(config_.layers), BlockCache{});
  for (int l = 0; l < config_.layers; ++l) {
    u = cc_attention_block(l, u, c.history, c.bias_matrix, c.cross_mask, params, ctx,
                           &c.blocks[static_cast<std::size_t>(l)]);
    check_finite(u, "candidate-conditioned block " + std::to_string(l));
  }

  HeadCache& hc = c.head;
  hc.reps = u;
  hc.cand_emb = cand;
  hc.joined = Tensor::matrix(C, 3 * d);
  for (std::size_t j = 0; j < C; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      hc.joined(j, k) = u(j, k);
      hc.joined(j, d + k) = cand(j, k);
      hc.joined(j, 2 * d + k) = u(j, k) * cand(j, k);
    }
  }
  hc.pre = ops::affine(hc.joined, params.value("head.w1"), params.value("head.b1"));
  hc.act = ops::gelu(hc.pre);
  hc.drop = ops::dropout(hc.act, config_.dropout, ctx.train, ctx.rng, &hc.mask);
  const Tensor out = ops::affine(hc.drop, params.value("head.w2"), params.value("head.b2"));
  check_finite(out, "prediction head");
  return std::vector<double>(out.values().begin(), out.values().end());
}

void Model::backward(const ForwardCache& c, std::span<const double> dscores,
                     ParamTable& params) const {
  const std::size_t L = c.pad_mask.size(), C = c.cand_ids.size();
  const std::size_t d = static_cast<std::size_t>(config_.d);
  require(dscores.size() == C, "backward: gradient length differs from slate");

  // Head.
  const HeadCache& hc = c.head;
  Tensor ds = Tensor::matrix(C, 1);
  for (std::size_t j = 0; j < C; ++j) ds[j] = dscores[j];
  Tensor g = ops::affine_backward(hc.drop, params.value("head.w2"), ds,
                                  params.grad("head.w2"), params.grad("head.b2"));
  g = ops::dropout_backward(hc.mask, g);
  g = ops::gelu_backward(hc.pre, g);
  const Tensor djoined = ops::affine_backward(hc.joined, params.value("head.w1"), g,
                                              params.grad("head.w1"), params.grad("head.b1"));
  Tensor du = Tensor::matrix(C, d);
  Tensor dcand = Tensor::matrix(C, d);
  for (std::size_t j = 0; j < C; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      const double dprod = djoined(j, 2 * d + k);
      du(j, k) = djoined(j, k) + dprod * hc.cand_emb(j, k);
      dcand(j, k) = djoined(j, d + k) + dprod * hc.reps(j, k);
    }
  }

  // Candidate-conditioned blocks, last to first.
  Tensor dx = Tensor::matrix(L, d);
  Tensor dbias = Tensor::matrix(C, L);
  for (int l = config_.layers - 1; l >= 0; --l) {
    const std::string& s = block_prefix_[static_cast<std::size_t>(l)];
    const BlockCache& b = c.blocks[static_cast<std::size_t>(l)];
    Tensor dr2 = ops::layer_norm_backward(b.norm2, params.value(s + "ln2_gain"), du,
                                          params.grad(s + "ln2_gain"),
                                          params.grad(s + "ln2_shift"));
    Tensor dmid = dr2;
    Tensor t = ops::affine_backward(b.ffn_drop, params.value(s + "ffn_w2"), dr2,
                                    params.grad(s + "ffn_w2"), params.grad(s + "ffn_b2"));
    t = ops::dropout_backward(b.ffn_mask, t);
    t = ops::gelu_backward(b.ffn_pre, t);
    ops::add_inplace(dmid, ops::affine_backward(b.mid, params.value(s + "ffn_w1"), t,
                                                params.grad(s + "ffn_w1"),
                                                params.grad(s + "ffn_b1")));
    const Tensor dr1 = ops::layer_norm_backward(b.norm1, params.value(s + "ln1_gain"), dmid,
                                                params.grad(s + "ln1_gain"),
                                                params.grad(s + "ln1_shift"));
    Tensor dinput = dr1;
    const Tensor dctx = ops::affine_backward(b.attn.context, params.value(s + "wo"), dr1,
                                             params.grad(s + "wo"), params.grad(s + "bo"));
    AttentionInputs in{b.q, b.k, b.v, &c.bias_matrix, c.cross_mask, config_.heads,
                       ops::kLogitClampBound};
    kernels::AttentionGrads ag;
    attention_backward(config_.parallel_kernels, in, b.attn, dctx, ag);
    ops::add_inplace(dbias, ag.dbias);
    ops::add_inplace(dinput, ops::affine_backward(b.input, params.value(s + "wq"), ag.dq,
                                                  params.grad(s + "wq"), params.grad(s + "bq")));
    ops::add_inplace(dx, linear_backward(c.history, params.value(s + "wk"), ag.dk,
                                              params.grad(s + "wk")));
    ops::add_inplace(dx, ops::affine_backward(c.history, params.value(s + "wv"), ag.dv,
                                              params.grad(s + "wv"), params.grad(s + "bv")));
    du = std::move(dinput);
  }
  ops::add_inplace(dcand, du);
  ops::embed_backward(c.cand_ids, dcand, params.grad("cand.poi_emb"));

  // Bias terms; padded columns are constants.
  if (config_.use_temporal_bias || config_.use_spatial_bias) {
    std::vector<double> dt(kNumTimeBuckets, 0.0), dsb(kNumDistBuckets, 0.0);
    for (std::size_t j = 0; j < C; ++j) {
      for (std::size_t i = 0; i < L; ++i) {
        if (c.pad_mask[i]) continue;
        dt[static_cast<std::size_t>(c.bias.time_bucket[i])] += dbias(j, i);
        dsb[static_cast<std::size_t>(c.bias.dist_bucket[j * L + i])] += dbias(j, i);
      }
    }
    auto scatter = [&](const std::string& table, const std::string& proj,
                       const std::vector<double>& dscalar) {
      const Tensor& tv = params.value(table);
      const Tensor& pv = params.value(proj);
      Tensor& tg = params.grad(table);
      Tensor& pg = params.grad(proj);
      for (std::size_t bkt = 0; bkt < dscalar.size(); ++bkt) {
        if (dscalar[bkt] == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) {
          tg(bkt, k) += dscalar[bkt] * pv[k];
          pg[k] += dscalar[bkt] * tv(bkt, k);
        }
      }
    };
    if (config_.use_temporal_bias) scatter("bias.time_table", "bias.time_proj", dt);
    if (config_.use_spatial_bias) scatter("bias.dist_table", "bias.dist_proj", dsb);
  }

  // History self-attention.
  zero_rows(dx, c.pad_mask);
  if (config_.use_history_self_attn) {
    const SelfAttnCache& a = c.self_attn;
    Tensor dx0 = dx;
    const Tensor dctx = ops::affine_backward(a.attn.context, params.value("hsa.wo"), dx,
                                             params.grad("hsa.wo"), params.grad("hsa.bo"));
    AttentionInputs in{a.q, a.k, a.v, nullptr, a.mask, config_.heads, 0.0};
    kernels::AttentionGrads ag;
    attention_backward(config_.parallel_kernels, in, a.attn, dctx, ag);
    ops::add_inplace(dx0, ops::affine_backward(a.input, params.value("hsa.wq"), ag.dq,
                                               params.grad("hsa.wq"), params.grad("hsa.bq")));
    ops::add_inplace(dx0, linear_backward(a.input, params.value("hsa.wk"), ag.dk,
                                               params.grad("hsa.wk")));
    ops::add_inplace(dx0, ops::affine_backward(a.input, params.value("hsa.wv"), ag.dv,
                                               params.grad("hsa.wv"), params.grad("hsa.bv")));
    dx = std::move(dx0);
    zero_rows(dx, c.pad_mask);
  }

  // Embedding layer.
  const EmbedCache& e = c.embed;
  const Tensor dsum = ops::layer_norm_backward(e.norm, params.value("embed.ln_gain"), dx,
                                               params.grad("embed.ln_gain"),
                                               params.grad("embed.ln_shift"));
  ops::embed_backward(e.poi_ids, dsum, params.grad("hist.poi_emb"), true);
  ops::embed_backward(e.hours, dsum, params.grad("time.hour_emb"));
  ops::embed_backward(e.weekdays, dsum, params.grad("time.weekday_emb"));
  Tensor dl = ops::affine_backward(e.loc_act, params.value("loc.w2"), dsum,
                                   params.grad("loc.w2"), params.grad("loc.b2"));
  dl = ops::relu_backward(e.loc_pre, dl);
  ops::affine_backward(e.loc_in, params.value("loc.w1"), dl, params.grad("loc.w1"),
                       params.grad("loc.b1"));
}

AttentionDump Model::attention_dump(const PaddedHistory& h, const CandidateSlate& c,
                                    const ParamTable& params) const {
  ForwardCache cache;
  ForwardContext ctx;
  ctx.cache = &cache;
  forward(h, c, params, ctx);
  AttentionDump dump;
  for (const auto& b : cache.blocks) dump.layers.push_back(b.attn.probs);
  return dump;
}

void write_attention_dump(std::ostream& out, const AttentionDump& dump) {
  out << "# layer,head,candidate,position,weight\n";
  char buf[48];
  for (std::size_t l = 0; l < dump.layers.size(); ++l) {
    const Tensor& t = dump.layers[l];
    const std::size_t H = t.shape()[0], C = t.shape()[1], L = t.shape()[2];
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t j = 0; j < C; ++j)
        for (std::size_t i = 0; i < L; ++i) {
          std::snprintf(buf, sizeof buf, "%.17g", t[(h * C + j) * L + i]);
          out << l << ',' << h << ',' << j << ',' << i << ',' << buf << '\n';
        }
  }
}

std::string model_config_to_text(const ModelConfig& c) {
  std::ostringstream o;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", c.dropout);
  o << "num_pois=" << c.num_pois << '\n'
    << "d=" << c.d << '\n'
    << "heads=" << c.heads << '\n'
    << "layers=" << c.layers << '\n'
    << "history_len=" << c.history_len << '\n'
    << "ffn_hidden=" << c.ffn_hidden << '\n'
    << "head_hidden=" << c.head_hidden << '\n'
    << "use_history_self_attn=" << c.use_history_self_attn << '\n'
    << "use_temporal_bias=" << c.use_temporal_bias << '\n'
    << "use_spatial_bias=" << c.use_spatial_bias << '\n'
    << "dropout=" << buf << '\n';
  return o.str();
}

ModelConfig model_config_from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model config: expected key=value");
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "num_pois") c.num_pois = std::stoi(v);
    else if (k == "d") c.d = std::stoi(v);
    else if (k == "heads") c.heads = std::stoi(v);
    else if (k == "layers") c.layers = std::stoi(v);
    else if (k == "history_len") c.history_len = std::stoi(v);
    else if (k == "ffn_hidden") c.ffn_hidden = std::stoi(v);
    else if (k == "head_hidden") c.head_hidden = std::stoi(v);
    else if (k == "use_history_self_attn") c.use_history_self_attn = v == "1";
    else if (k == "use_temporal_bias") c.use_temporal_bias = v == "1";
    else if (k == "use_spatial_bias") c.use_spatial_bias = v == "1";
    else if (k == "dropout") c.dropout = std::stod(v);
    else throw ConfigError("model config: unknown key " + k);
  }
  return c;
}

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  char buf[40];
  out << "ccrank-checkpoint-v1\n" << model_config_to_text(ckpt.config);
  const std::pair<const char*, double> stats[] = {
      {"mu_lat", ckpt.stats.mu_lat},
      {"sigma_lat", ckpt.stats.sigma_lat},
      {"mu_lon", ckpt.stats.mu_lon},
      {"sigma_lon", ckpt.stats.sigma_lon}};
  for (const auto& [k, v] : stats) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << "stats." << k << '=' << buf << '\n';
  }
  out << "---\n";
  ckpt.params.save(out);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "ccrank-checkpoint-v1")
    throw ValidationError("not a ccrank checkpoint");
  std::string config_text;
  Checkpoint ckpt;
  while (std::getline(in, line) && line != "---") {
    if (line.rfind("stats.", 0) == 0) {
      const auto eq = line.find('=');
      const std::string k = line.substr(6, eq - 6);
      const double v = std::stod(line.substr(eq + 1));
      if (k == "mu_lat") ckpt.stats.mu_lat = v;
      else if (k == "sigma_lat") ckpt.stats.sigma_lat = v;
      else if (k == "mu_lon") ckpt.stats.mu_lon = v;
      else if (k == "sigma_lon") ckpt.stats.sigma_lon = v;
      continue;
    }
    config_text += line + '\n';
  }
  if (line != "---") throw ValidationError("checkpoint header not terminated");
  ckpt.config = model_config_from_text(config_text);
  ckpt.config.validate();
  ckpt.stats.num_pois = ckpt.config.num_pois;
  ckpt.params = ParamTable::load(in);
  return ckpt;
}

void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  save_checkpoint(out, ckpt);
  out.flush();
  if (!out) throw IoError("short write to checkpoint " + path);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace ccrank
