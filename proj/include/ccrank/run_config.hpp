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
#include <string>
#include <vector>

#include "ccrank/evaluation.hpp"
#include "ccrank/model.hpp"
#include "ccrank/synth.hpp"
#include "ccrank/training.hpp"

namespace ccrank {

// Everything one command invocation needs. Keys are resolved in order:
// built-in defaults, the --config file, CCRANK_<KEY> environment variables
// (key upper-cased, e.g. CCRANK_EPOCHS), then command-line flags.
struct RunConfig {
  // Paths.
  std::string data;        // raw check-in file
  std::string cache;       // split cache written by ingest
  std::string checkpoint;  // model checkpoint
  std::string report;      // evaluation report; stdout when empty
  std::string ranks;       // optional per-instance rank dump
  std::string out;         // synth output
  // Preprocessing.
  int min_count = 10;
  int holdout = 30;
  // Evaluation.
  PoolMode pool_mode = PoolMode::kSampled;
  int pool_size = 100;
  std::vector<int> sweep;
  // Seeds model init, sampling, dropout, eval pools and synthesis.
  std::uint64_t seed = 0;

  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;

  RunConfig();

  // Throws ConfigError on an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  // `key = value` lines; blank lines and '#' comments ignored.
  void apply_text(const std::string& text);
  void apply_file(const std::string& path);
  void apply_env(char** environ);

  // Every key with its resolved value, one `key=value` per line, sorted.
  std::string to_text() const;
  static std::vector<std::string> keys();
};

std::vector<int> parse_int_list(const std::string& csv);

// Writes `path + ".config"` holding the effective configuration.
void write_config_echo(const std::string& artifact, const RunConfig& config);

}  // namespace ccrank
