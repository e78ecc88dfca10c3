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

#include "ccrank/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace ccrank {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& [name, e] : max_rel_error) w = std::max(w, e);
  return w;
}

std::string GradCheckReport::worst_param() const {
  std::string name;
  double w = -1.0;
  for (const auto& [n, e] : max_rel_error) {
    if (e > w) {
      w = e;
      name = n;
    }
  }
  return name;
}

namespace {

double central(const std::function<double(const ParamTable&)>& loss, ParamTable& params,
               Param& p, const std::string& name, std::size_t i, double h) {
  const double saved = p.value[i];
  p.value[i] = saved + h;
  const double up = loss(params);
  p.value[i] = saved - h;
  const double down = loss(params);
  p.value[i] = saved;
  if (!std::isfinite(up) || !std::isfinite(down))
    throw NumericFault("grad_check: non-finite loss while perturbing " + name + "[" +
                       std::to_string(i) + "]");
  return (up - down) / (2.0 * h);
}

// Ridders' method as in Numerical Recipes' dfridr.
double ridders(const std::function<double(const ParamTable&)>& loss, ParamTable& params,
               Param& p, const std::string& name, std::size_t i, double h) {
  constexpr int kTab = 10;
  constexpr double kCon = 1.4, kCon2 = kCon * kCon, kSafe = 2.0;
  double a[kTab][kTab];
  double err = std::numeric_limits<double>::infinity();
  double ans = 0.0;
  a[0][0] = central(loss, params, p, name, i, h);
  ans = a[0][0];
  for (int k = 1; k < kTab; ++k) {
    h /= kCon;
    a[0][k] = central(loss, params, p, name, i, h);
    double fac = kCon2;
    for (int j = 1; j <= k; ++j) {
      a[j][k] = (a[j - 1][k] * fac - a[j - 1][k - 1]) / (fac - 1.0);
      fac *= kCon2;
      const double e = std::max(std::abs(a[j][k] - a[j - 1][k]),
                                std::abs(a[j][k] - a[j - 1][k - 1]));
      if (e <= err) {
        err = e;
        ans = a[j][k];
      }
    }
    if (std::abs(a[k][k] - a[k - 1][k - 1]) >= kSafe * err) break;
  }
  return ans;
}

}  // namespace

GradCheckReport grad_check(const std::function<double(const ParamTable&)>& loss,
                           ParamTable& params, const GradCheckOptions& opts) {
  GradCheckReport report;
  std::mt19937_64 rng(opts.seed);
  const double base = loss(params);
  if (!std::isfinite(base)) throw NumericFault("grad_check: loss is not finite");

  for (auto& [name, p] : params) {
    const std::size_t n = p.value.size();
    const std::size_t first = p.frozen_row0 ? p.value.cols() : 0;
    std::vector<std::size_t> entries(n - first);
    std::iota(entries.begin(), entries.end(), first);
    if (opts.max_entries_per_param > 0 && entries.size() > opts.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opts.max_entries_per_param);
    }
    double worst = 0.0;
    for (std::size_t i : entries) {
      const double numeric = opts.extrapolate
                                 ? ridders(loss, params, p, name, i, opts.eps)
                                 : central(loss, params, p, name, i, opts.eps);
      worst = std::max(worst, relative_error(p.grad[i], numeric));
    }
    report.max_rel_error[name] = worst;
    report.entries_checked += entries.size();
  }
  return report;
}

}  // namespace ccrank
