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
#include <random>
#include <span>
#include <vector>

#include "ccrank/tensor.hpp"

// Differentiable primitives used by the model. Each forward has a matching
// backward that accumulates parameter gradients (`+=`) and returns the input
// gradient. Matrices are [rows x cols]; rank-1 tensors act as row vectors.
namespace ccrank::ops {

inline constexpr double kMaskedLogitOffset = 1e4;
inline constexpr double kLogitClampBound = 50.0;
// Small enough that a unit-variance row normalizes to variance 1 +- 1e-10.
inline constexpr double kLayerNormEps = 1e-10;

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Tensor matmul(const Tensor& a, const Tensor& b);              // a b
Tensor matmul_bt(const Tensor& a, const Tensor& b);           // a b^T
void matmul_at_accumulate(const Tensor& a, const Tensor& b,   // out += a^T b
                          Tensor& out);

// y = x w + b with x [n x in], w [in x out], b [out].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                       Tensor& dw, Tensor& db);

// Row-wise softmax. `mask` is either one flag per logit or one flag per
// column (broadcast over rows); true = masked. Masked logits are offset by
// -neg_const; a row with every entry masked returns all zeros.
Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> mask,
                      double neg_const = kMaskedLogitOffset);
Tensor masked_softmax_backward(const Tensor& probs, const Tensor& dprobs);

// Hard clip to [-bound, bound]; zero gradient outside.
Tensor clamp_logits(const Tensor& logits, double bound = kLogitClampBound);
Tensor clamp_logits_backward(const Tensor& logits, const Tensor& dy,
                             double bound = kLogitClampBound);

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

// Per-row normalization followed by gain/shift; population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  LayerNormCache* cache = nullptr, double eps = kLayerNormEps);
Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                           const Tensor& dy, Tensor& dgain, Tensor& dshift);

// tanh approximation.
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// Inverted dropout. When `train` is false (or rate is 0) this is the identity
// and `mask` is left empty. Otherwise `mask` receives the per-entry scale
// (0 or 1/(1-rate)).
Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64* rng,
               Tensor* mask);
Tensor dropout_backward(const Tensor& mask, const Tensor& dy);

// Gathers rows of `table`. Indices must be in range.
Tensor embed_lookup(const Tensor& table, std::span<const int> indices);
// Scatter-adds rows of dy into dtable; row 0 is skipped when frozen_row0.
void embed_backward(std::span<const int> indices, const Tensor& dy,
                    Tensor& dtable, bool frozen_row0 = false);

Tensor hadamard(const Tensor& a, const Tensor& b);
void hadamard_backward(const Tensor& a, const Tensor& b, const Tensor& dy,
                       Tensor& da, Tensor& db);

void add_inplace(Tensor& dst, const Tensor& src);
bool all_finite(const Tensor& t);

}  // namespace ccrank::ops
