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

#include "ccrank/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ccrank::ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  require(b.rows() == k, "matmul: inner extents differ");
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += s * bp[j];
    }
  }
  return out;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  require(b.cols() == k, "matmul_bt: inner extents differ");
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      out(i, j) = s;
    }
  }
  return out;
}

void matmul_at_accumulate(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  require(b.rows() == n, "matmul_at: row counts differ");
  require(out.rows() == k && out.cols() == m, "matmul_at: output shape");
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    const double* bi = b.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      double* o = out.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += s * bi[j];
    }
  }
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(b.size() == w.cols(), "affine: bias extent");
  Tensor y = matmul(x, w);
  const std::size_t m = y.cols();
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double* yi = y.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) yi[j] += b[j];
  }
  return y;
}

Tensor affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                       Tensor& dw, Tensor& db) {
  matmul_at_accumulate(x, dy, dw);
  const std::size_t m = dy.cols();
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    const double* d = dy.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) db[j] += d[j];
  }
  return matmul_bt(dy, w);
}

Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> mask,
                      double neg_const) {
  const std::size_t n = logits.rows(), m = logits.cols();
  const bool per_column = mask.size() == m && n != 1;
  require(per_column || mask.size() == logits.size(),
          "masked_softmax: mask shape does not conform");
  Tensor out(logits.shape());
  std::vector<double> z(m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* mi = per_column ? mask.data() : mask.data() + i * m;
    bool any_open = false;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      z[j] = logits(i, j) - (mi[j] ? neg_const : 0.0);
      any_open = any_open || !mi[j];
      peak = std::max(peak, z[j]);
    }
    if (!any_open) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      z[j] = std::exp(z[j] - peak);
      total += z[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < m; ++j) out(i, j) = z[j] * inv;
  }
  return out;
}

Tensor masked_softmax_backward(const Tensor& probs, const Tensor& dprobs) {
  Tensor dz(probs.shape());
  const std::size_t n = probs.rows(), m = probs.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < m; ++j) dot += probs(i, j) * dprobs(i, j);
    for (std::size_t j = 0; j < m; ++j)
      dz(i, j) = probs(i, j) * (dprobs(i, j) - dot);
  }
  return dz;
}

Tensor clamp_logits(const Tensor& logits, double bound) {
  Tensor out = logits;
  for (double& v : out.values()) v = std::clamp(v, -bound, bound);
  return out;
}

Tensor clamp_logits_backward(const Tensor& logits, const Tensor& dy,
                             double bound) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (logits[i] > bound || logits[i] < -bound) dx[i] = 0.0;
  return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  LayerNormCache* cache, double eps) {
  const std::size_t n = x.rows(), m = x.cols();
  require(gain.size() == m && shift.size() == m, "layer_norm: gain extent");
  Tensor out(x.shape());
  if (cache) {
    cache->xhat = Tensor(x.shape());
    cache->inv_std.assign(n, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      const double xh = (r[j] - mean) * inv_std;
      out(i, j) = xh * gain[j] + shift[j];
      if (cache) cache->xhat(i, j) = xh;
    }
    if (cache) cache->inv_std[i] = inv_std;
  }
  return out;
}

Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                           const Tensor& dy, Tensor& dgain, Tensor& dshift) {
  const std::size_t n = dy.rows(), m = dy.cols();
  Tensor dx(dy.shape());
  std::vector<double> dxh(m);
  for (std::size_t i = 0; i < n; ++i) {
    double sum_d = 0.0, sum_dx = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double g = dy(i, j);
      const double xh = cache.xhat(i, j);
      dgain[j] += g * xh;
      dshift[j] += g;
      dxh[j] = g * gain[j];
      sum_d += dxh[j];
      sum_dx += dxh[j] * xh;
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j) {
      dx(i, j) = cache.inv_std[i] *
                 (dxh[j] - inv_m * sum_d - cache.xhat(i, j) * inv_m * sum_dx);
    }
  }
  return dx;
}

namespace {

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v)));
  }
  return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double u = kSqrt2OverPi * (v + kGeluC * v * v * v);
    const double t = std::tanh(u);
    const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
    dx[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] <= 0.0) dx[i] = 0.0;
  return dx;
}

Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64* rng,
               Tensor* mask) {
  if (mask) *mask = Tensor();
  if (!train || rate <= 0.0) return x;
  require(rng != nullptr, "dropout: training mode needs an rng");
  require(rate < 1.0, "dropout: rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor m(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = uniform01(*rng) < rate ? 0.0 : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& dy) {
  if (mask.empty()) return dy;
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

Tensor embed_lookup(const Tensor& table, std::span<const int> indices) {
  const std::size_t d = table.cols();
  Tensor out = Tensor::matrix(indices.size(), d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    require(idx >= 0 && static_cast<std::size_t>(idx) < table.rows(),
            "embed_lookup: index out of table range");
    const auto src = table.row(static_cast<std::size_t>(idx));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void embed_backward(std::span<const int> indices, const Tensor& dy,
                    Tensor& dtable, bool frozen_row0) {
  const std::size_t d = dtable.cols();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (frozen_row0 && idx == 0) continue;
    auto dst = dtable.row(static_cast<std::size_t>(idx));
    const auto src = dy.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
  }
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "hadamard: shape mismatch");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

void hadamard_backward(const Tensor& a, const Tensor& b, const Tensor& dy,
                       Tensor& da, Tensor& db) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    da[i] += dy[i] * b[i];
    db[i] += dy[i] * a[i];
  }
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require(dst.size() == src.size(), "add_inplace: size mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace ccrank::ops
