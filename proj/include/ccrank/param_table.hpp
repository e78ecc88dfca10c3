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
#include <iosfwd>
#include <map>
#include <string>

#include "ccrank/tensor.hpp"

namespace ccrank {

struct Param {
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
  bool decay = true;         // subject to decoupled weight decay
  bool frozen_row0 = false;  // row 0 is the padding embedding, kept at zero
};

// Named learnable tensors with same-shaped gradient and moment buffers.
// Iteration order is the lexicographic order of names.
class ParamTable {
 public:
  Param& add(const std::string& name, Tensor value, bool decay = true,
             bool frozen_row0 = false);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& grad(const std::string& name) { return at(name).grad; }

  void zero_grad();
  std::size_t scalar_count() const;
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Optimizer step counter (number of completed updates).
  std::int64_t step = 0;

  // Checkpoint layout, all integers and floats little-endian:
  //   "CCPT" u32 version=1 u32 count
  //   count x { u32 name_len, name bytes, u8 flags (1 = decay, 2 = frozen
  //             row 0), u32 rank, u64 extent[rank], f64 value[product] }
  // Moments and gradients are not stored.
  void save(std::ostream& out) const;
  static ParamTable load(std::istream& in);

  bool same_values(const ParamTable& other) const;

 private:
  std::map<std::string, Param> params_;
};

}  // namespace ccrank
