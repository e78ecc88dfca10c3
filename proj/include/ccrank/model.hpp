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

#include "ccrank/attention_kernels.hpp"
#include "ccrank/ingest.hpp"
#include "ccrank/ops.hpp"
#include "ccrank/param_table.hpp"

namespace ccrank {

// Fixed-length, left-padded trajectory. Padding is a prefix; the most recent
// real event sits at index L-1.
struct PaddedHistory {
  std::vector<PoiId> poi_ids;
  std::vector<Seconds> timestamps;
  std::vector<LatLon> norm_coords;
  std::vector<LatLon> raw_coords;
  std::vector<std::uint8_t> pad_mask;  // 1 = padded
  Seconds t_last = 0;

  std::size_t length() const { return poi_ids.size(); }
  std::size_t real_count() const;
  // Throws ContractViolation when an invariant does not hold.
  void validate() const;
};

// Uses the most recent min(length, events.size()) events.
PaddedHistory make_history(std::span<const CheckIn> events, std::size_t length,
                           const DatasetStats& stats);

struct CandidateSlate {
  std::vector<PoiId> poi_ids;
  std::vector<LatLon> coords;

  std::size_t size() const { return poi_ids.size(); }
  void validate() const;
};

CandidateSlate make_slate(std::span<const PoiId> ids, std::span<const LatLon> poi_coords);

struct ModelConfig {
  int num_pois = 0;  // tables hold num_pois + 1 rows
  int d = 64;
  int heads = 8;
  int layers = 2;
  int history_len = 100;
  int ffn_hidden = 128;
  int head_hidden = 64;
  bool use_history_self_attn = true;
  bool use_temporal_bias = true;
  bool use_spatial_bias = true;
  double dropout = 0.1;
  bool parallel_kernels = true;

  // Throws ConfigError.
  void validate() const;
};

struct EmbedCache {
  std::vector<int> poi_ids, hours, weekdays;
  Tensor loc_in, loc_pre, loc_act;
  Tensor sum;  // before normalization
  ops::LayerNormCache norm;
};

struct SelfAttnCache {
  Tensor input, q, k, v;
  std::vector<std::uint8_t> mask;
  kernels::AttentionOutputs attn;
};

struct BiasCache {
  std::vector<int> time_bucket;  // [L]
  std::vector<int> dist_bucket;  // [C x L]
};

struct BlockCache {
  Tensor input, q, k, v;
  kernels::AttentionOutputs attn;
  ops::LayerNormCache norm1, norm2;
  Tensor mid, ffn_pre, ffn_act, ffn_drop, ffn_mask;
};

struct HeadCache {
  Tensor reps, cand_emb, joined, pre, act, drop, mask;
};

struct ForwardCache {
  std::vector<std::uint8_t> pad_mask;
  std::vector<std::uint8_t> cross_mask;  // [C x L]
  std::vector<int> cand_ids;
  EmbedCache embed;
  SelfAttnCache self_attn;
  Tensor history;  // X after the optional self-attention
  BiasCache bias;
  Tensor bias_matrix;
  std::vector<BlockCache> blocks;
  HeadCache head;
};

struct ForwardContext {
  bool train = false;               // enables dropout
  std::mt19937_64* rng = nullptr;   // required when train && dropout > 0
  ForwardCache* cache = nullptr;    // filled when non-null
};

// Per-block attention weights, each {heads, C, L}.
struct AttentionDump {
  std::vector<Tensor> layers;
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  // Embeddings and projections ~ U(-1/sqrt(fan), 1/sqrt(fan)); bias-bucket
  // tables zero; layer-norm gains one.
  ParamTable init_params(std::uint64_t seed) const;

  // [L x d] layer-normalized token embeddings, padded rows zero.
  Tensor embed_history(const PaddedHistory& h, const ParamTable& params,
                       EmbedCache* cache = nullptr) const;
  // Causal, padding-safe self-attention with a residual; padded rows zero.
  Tensor history_self_attention(const Tensor& x, std::span<const std::uint8_t> pad_mask,
                                const ParamTable& params,
                                SelfAttnCache* cache = nullptr) const;
  // [C x L] logit bias: temporal + spatial terms, -1e4 on padded columns.
  Tensor build_bias(const PaddedHistory& h, const CandidateSlate& c,
                    const ParamTable& params, BiasCache* cache = nullptr) const;
  // One candidate-conditioned block: cross-attention (candidates query the
  // history) + residual + norm, then feed-forward + residual + norm.
  Tensor cc_attention_block(int layer, const Tensor& u, const Tensor& x,
                            const Tensor& bias, std::span<const std::uint8_t> cross_mask,
                            const ParamTable& params, const ForwardContext& ctx,
                            BlockCache* cache = nullptr) const;

  // One score per candidate. Throws NumericFault naming the stage on NaN/Inf.
  std::vector<double> forward(const PaddedHistory& h, const CandidateSlate& c,
                              const ParamTable& params,
                              const ForwardContext& ctx = {}) const;

  // Accumulates d(loss)/d(param) into params' gradients given d(loss)/d(score).
  void backward(const ForwardCache& cache, std::span<const double> dscores,
                ParamTable& params) const;

  AttentionDump attention_dump(const PaddedHistory& h, const CandidateSlate& c,
                               const ParamTable& params) const;

 private:
  ModelConfig config_;
  std::vector<std::string> block_prefix_;
};

// Sinusoidal encoding (base 10000) of each slot's distance from the most
// recent slot, so extra left padding leaves real positions unchanged.
Tensor positional_encoding(std::size_t length, std::size_t d);

// Structured text: one `layer,head,candidate,position,weight` row per entry.
void write_attention_dump(std::ostream& out, const AttentionDump& dump);

// Key=value rendering of a config and its inverse (unknown keys rejected).
std::string model_config_to_text(const ModelConfig& config);
ModelConfig model_config_from_text(const std::string& text);

struct Checkpoint {
  ModelConfig config;
  DatasetStats stats;  // only the normalization fields are stored
  ParamTable params;
};

// Text header (`ccrank-checkpoint-v1`, config keys, normalization stats,
// terminated by a `---` line) followed by the binary ParamTable.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace ccrank
