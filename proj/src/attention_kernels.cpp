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

#include "ccrank/attention_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ccrank/geo_time.hpp"
#include "ccrank/ops.hpp"

namespace ccrank::kernels {

namespace {

void check_shapes(const AttentionInputs& in) {
  const std::size_t nq = in.q.rows(), nk = in.k.rows(), d = in.q.cols();
  require(in.heads >= 1 && d % static_cast<std::size_t>(in.heads) == 0,
          "attention: width not divisible by heads");
  require(in.k.cols() == d && in.v.cols() == d && in.v.rows() == nk,
          "attention: key/value shape");
  require(in.mask.size() == nq * nk, "attention: mask shape");
  require(in.bias == nullptr || (in.bias->rows() == nq && in.bias->cols() == nk),
          "attention: bias shape");
}

void prepare(const AttentionInputs& in, AttentionOutputs& out) {
  const std::size_t h = static_cast<std::size_t>(in.heads);
  const std::size_t nq = in.q.rows(), nk = in.k.rows();
  out.logits = in.keep_weights ? Tensor({h, nq, nk}) : Tensor();
  out.probs = in.keep_weights ? Tensor({h, nq, nk}) : Tensor();
  out.context = Tensor::matrix(nq, in.q.cols());
}

// Softmax of one row of clamped, masked logits; writes zeros if every key is
// masked. Shared by both forward kernels so they round identically.
void softmax_row(const double* logits, const std::uint8_t* mask, std::size_t nk,
                 double bound, double* probs) {
  double peak = -std::numeric_limits<double>::infinity();
  bool any_open = false;
  for (std::size_t j = 0; j < nk; ++j) {
    double z = bound > 0.0 ? std::clamp(logits[j], -bound, bound) : logits[j];
    if (mask[j]) z -= ops::kMaskedLogitOffset;
    any_open = any_open || !mask[j];
    probs[j] = z;
    peak = std::max(peak, z);
  }
  if (!any_open) {
    std::fill(probs, probs + nk, 0.0);
    return;
  }
  double total = 0.0;
  for (std::size_t j = 0; j < nk; ++j) {
    probs[j] = std::exp(probs[j] - peak);
    total += probs[j];
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < nk; ++j) probs[j] *= inv;
}

}  // namespace

void attention_forward_serial(const AttentionInputs& in, AttentionOutputs& out) {
  check_shapes(in);
  prepare(in, out);
  const std::size_t heads = static_cast<std::size_t>(in.heads);
  const std::size_t nq = in.q.rows(), nk = in.k.rows(), d = in.q.cols();
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> scratch(in.keep_weights ? 0 : 2 * nk);

  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < nq; ++i) {
      double* lrow = in.keep_weights ? out.logits.data() + (h * nq + i) * nk : scratch.data();
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += in.q(i, off + c) * in.k(j, off + c);
        s *= scale;
        if (in.bias) s += (*in.bias)(i, j);
        lrow[j] = s;
      }
      double* prow = in.keep_weights ? out.probs.data() + (h * nq + i) * nk : lrow + nk;
      softmax_row(lrow, in.mask.data() + i * nk, nk, in.clamp_bound, prow);
      for (std::size_t j = 0; j < nk; ++j) {
        const double p = prow[j];
        if (p == 0.0) continue;
        for (std::size_t c = 0; c < dh; ++c) out.context(i, off + c) += p * in.v(j, off + c);
      }
    }
  }
}

void attention_forward_parallel(const AttentionInputs& in, AttentionOutputs& out) {
  check_shapes(in);
  prepare(in, out);
  const std::size_t heads = static_cast<std::size_t>(in.heads);
  const std::size_t nq = in.q.rows(), nk = in.k.rows(), d = in.q.cols();
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* q = in.q.data();
  const double* k = in.k.data();
  const double* v = in.v.data();
  const double* bias = in.bias ? in.bias->data() : nullptr;

  // Queries are independent; each thread owns whole context rows.
#pragma omp parallel
  {
    std::vector<double> scratch(in.keep_weights ? 0 : 2 * nk);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(nq); ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      double* ctx = out.context.data() + i * d;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        const double* qi = q + i * d + off;
        double* lrow = in.keep_weights ? out.logits.data() + (h * nq + i) * nk : scratch.data();
        for (std::size_t j = 0; j < nk; ++j) {
          const double* kj = k + j * d + off;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s *= scale;
          if (bias) s += bias[i * nk + j];
          lrow[j] = s;
        }
        double* prow = in.keep_weights ? out.probs.data() + (h * nq + i) * nk : lrow + nk;
        softmax_row(lrow, in.mask.data() + i * nk, nk, in.clamp_bound, prow);
        double* ci = ctx + off;
        for (std::size_t j = 0; j < nk; ++j) {
          const double p = prow[j];
          if (p == 0.0) continue;
          const double* vj = v + j * d + off;
          for (std::size_t c = 0; c < dh; ++c) ci[c] += p * vj[c];
        }
      }
    }
  }
}

void attention_backward_serial(const AttentionInputs& in, const AttentionOutputs& fwd,
                               const Tensor& dcontext, AttentionGrads& g) {
  const std::size_t heads = static_cast<std::size_t>(in.heads);
  const std::size_t nq = in.q.rows(), nk = in.k.rows(), d = in.q.cols();
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double bound = in.clamp_bound;
  g.dq = Tensor::matrix(nq, d);
  g.dk = Tensor::matrix(nk, d);
  g.dv = Tensor::matrix(nk, d);
  g.dbias = in.bias ? Tensor::matrix(nq, nk) : Tensor();

  std::vector<double> dp(nk), ds(nk);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < nq; ++i) {
      const double* prow = fwd.probs.data() + (h * nq + i) * nk;
      const double* lrow = fwd.logits.data() + (h * nq + i) * nk;
      double dot = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += dcontext(i, off + c) * in.v(j, off + c);
        dp[j] = s;
        dot += prow[j] * s;
      }
      for (std::size_t j = 0; j < nk; ++j) {
        double dz = prow[j] * (dp[j] - dot);
        if (bound > 0.0 && (lrow[j] > bound || lrow[j] < -bound)) dz = 0.0;
        ds[j] = dz;
        if (in.bias) g.dbias(i, j) += dz;
        for (std::size_t c = 0; c < dh; ++c) {
          g.dq(i, off + c) += dz * scale * in.k(j, off + c);
          g.dk(j, off + c) += dz * scale * in.q(i, off + c);
          g.dv(j, off + c) += prow[j] * dcontext(i, off + c);
        }
      }
    }
  }
}

void attention_backward_parallel(const AttentionInputs& in,
                                 const AttentionOutputs& fwd,
                                 const Tensor& dcontext, AttentionGrads& g) {
  const std::size_t heads = static_cast<std::size_t>(in.heads);
  const std::size_t nq = in.q.rows(), nk = in.k.rows(), d = in.q.cols();
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double bound = in.clamp_bound;
  g.dq = Tensor::matrix(nq, d);
  g.dk = Tensor::matrix(nk, d);
  g.dv = Tensor::matrix(nk, d);
  g.dbias = in.bias ? Tensor::matrix(nq, nk) : Tensor();

  // Pass 1, per query row: logit gradients, dq and the bias gradient.
  Tensor dlogits({heads, nq, nk});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(nq); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      const double* prow = fwd.probs.data() + (h * nq + i) * nk;
      const double* lrow = fwd.logits.data() + (h * nq + i) * nk;
      double* drow = dlogits.data() + (h * nq + i) * nk;
      const double* dci = dcontext.data() + i * d + off;
      double dot = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        const double* vj = in.v.data() + j * d + off;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += dci[c] * vj[c];
        drow[j] = s;
        dot += prow[j] * s;
      }
      double* dqi = g.dq.data() + i * d + off;
      for (std::size_t j = 0; j < nk; ++j) {
        double dz = prow[j] * (drow[j] - dot);
        if (bound > 0.0 && (lrow[j] > bound || lrow[j] < -bound)) dz = 0.0;
        drow[j] = dz;
        if (dz == 0.0) continue;
        const double* kj = in.k.data() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) dqi[c] += dz * scale * kj[c];
      }
    }
    if (in.bias) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double* drow = dlogits.data() + (h * nq + i) * nk;
        for (std::size_t j = 0; j < nk; ++j) g.dbias(i, j) += drow[j];
      }
    }
  }

  // Pass 2, per key row: dk and dv.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(nk); ++jj) {
    const std::size_t j = static_cast<std::size_t>(jj);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      double* dkj = g.dk.data() + j * d + off;
      double* dvj = g.dv.data() + j * d + off;
      for (std::size_t i = 0; i < nq; ++i) {
        const double dz = dlogits[(h * nq + i) * nk + j];
        const double p = fwd.probs[(h * nq + i) * nk + j];
        const double* qi = in.q.data() + i * d + off;
        const double* dci = dcontext.data() + i * d + off;
        for (std::size_t c = 0; c < dh; ++c) {
          dkj[c] += dz * scale * qi[c];
          dvj[c] += p * dci[c];
        }
      }
    }
  }
}

void distance_buckets_serial(std::span<const LatLon> history,
                             std::span<const LatLon> candidates,
                             std::vector<int>& out) {
  const std::size_t nh = history.size();
  out.assign(candidates.size() * nh, 0);
  for (std::size_t j = 0; j < candidates.size(); ++j)
    for (std::size_t i = 0; i < nh; ++i)
      out[j * nh + i] = bucketize_dist(haversine_km(
          history[i].lat, history[i].lon, candidates[j].lat, candidates[j].lon));
}

void distance_buckets_parallel(std::span<const LatLon> history,
                               std::span<const LatLon> candidates,
                               std::vector<int>& out) {
  const std::size_t nh = history.size();
  out.assign(candidates.size() * nh, 0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(candidates.size()); ++jj) {
    const std::size_t j = static_cast<std::size_t>(jj);
    const LatLon c = candidates[j];
    for (std::size_t i = 0; i < nh; ++i)
      out[j * nh + i] =
          bucketize_dist(haversine_km(history[i].lat, history[i].lon, c.lat, c.lon));
  }
}

}  // namespace ccrank::kernels
