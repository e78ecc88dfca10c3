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
#include <span>
#include <vector>

#include "ccrank/ingest.hpp"
#include "ccrank/tensor.hpp"

// Multi-head attention and candidate/history distance kernels. Every kernel
// has a serial reference (`*_serial`) and an OpenMP version (`*_parallel`)
// that must agree to rounding; the model uses the parallel one.
namespace ccrank::kernels {

struct AttentionInputs {
  const Tensor& q;  // [nq x d]
  const Tensor& k;  // [nk x d]
  const Tensor& v;  // [nk x d]
  // [nq x nk] logit bias shared by every head, or null.
  const Tensor* bias = nullptr;
  // [nq x nk], nonzero = key hidden from that query.
  std::span<const std::uint8_t> mask;
  int heads = 1;
  // Logits are clipped to [-bound, bound] before masking; <= 0 disables.
  double clamp_bound = 0.0;
  // False leaves logits and probs empty: inference needs only the context,
  // and at large nq the {heads, nq, nk} weights stop fitting in cache.
  bool keep_weights = true;
};

struct AttentionOutputs {
  Tensor logits;   // {heads, nq, nk}: scaled dot product + bias, before clamp
  Tensor probs;    // {heads, nq, nk}; all-masked rows are zero
  Tensor context;  // [nq x d], heads concatenated
};

struct AttentionGrads {
  Tensor dq, dk, dv;
  Tensor dbias;  // [nq x nk], summed over heads; empty without a bias
};

void attention_forward_serial(const AttentionInputs& in, AttentionOutputs& out);
void attention_forward_parallel(const AttentionInputs& in, AttentionOutputs& out);

void attention_backward_serial(const AttentionInputs& in, const AttentionOutputs& fwd,
                               const Tensor& dcontext, AttentionGrads& grads);
void attention_backward_parallel(const AttentionInputs& in,
                                 const AttentionOutputs& fwd,
                                 const Tensor& dcontext, AttentionGrads& grads);

// out[j * nh + i] = bucketize_dist(haversine(history[i], candidates[j])).
void distance_buckets_serial(std::span<const LatLon> history,
                             std::span<const LatLon> candidates,
                             std::vector<int>& out);
void distance_buckets_parallel(std::span<const LatLon> history,
                               std::span<const LatLon> candidates,
                               std::vector<int>& out);

}  // namespace ccrank::kernels
