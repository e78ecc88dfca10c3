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
#include <functional>
#include <map>
#include <string>

#include "ccrank/param_table.hpp"

namespace ccrank {

struct GradCheckOptions {
  double eps = 1e-5;
  // Ridders' extrapolation: central differences at steps eps, eps/1.4, ...
  // combined into a polynomial fit at step zero. Far less roundoff than a
  // single small step, at up to 2 * 10 loss calls per entry. eps is then the
  // largest step and must stay clear of kinks.
  bool extrapolate = false;
  // 0 checks every entry; otherwise a seeded subset of this many per tensor.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  // Max over checked entries of |a - n| / max(1e-8, |a| + |n|).
  std::map<std::string, double> max_rel_error;
  std::size_t entries_checked = 0;

  double worst() const;
  std::string worst_param() const;
};

// Compares the analytic gradients already stored in `params` against central
// differences of `loss`. Values are perturbed in place and restored. The loss
// must be deterministic. Frozen padding rows are skipped.
GradCheckReport grad_check(const std::function<double(const ParamTable&)>& loss,
                           ParamTable& params, const GradCheckOptions& opts = {});

double relative_error(double analytic, double numeric);

}  // namespace ccrank
