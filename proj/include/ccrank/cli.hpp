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

#include <iosfwd>

namespace ccrank {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // checks failed, numeric fault, other errors
inline constexpr int kExitIo = 2;       // missing or unwritable file
inline constexpr int kExitConfig = 3;   // bad flags or configuration
inline constexpr int kExitData = 4;     // malformed or unusable input data

// Entry point of the `ccrank` binary. Errors are reported as a single
// `ccrank: error: <kind>: <message>` line on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            char** env = nullptr);

}  // namespace ccrank
