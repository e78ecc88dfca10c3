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
#include <string>

namespace ccrank {

struct VerifyOptions {
  std::uint64_t seed = 0;
  // Test hook: adds an error to this parameter's analytic gradient before
  // the gradient check runs. Empty disables it.
  std::string corrupt_param;
};

struct VerifySummary {
  int passed = 0;
  int failed = 0;
};

// Gradient check of the full model, bucket and distance oracles, masking and
// padding invariants, serial/parallel kernel agreement and metric examples.
// Writes one `PASS name detail` or `FAIL name detail` line per check.
VerifySummary run_verify(const VerifyOptions& options, std::ostream& out);

}  // namespace ccrank
