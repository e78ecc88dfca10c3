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

#include "ccrank/param_table.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>

namespace ccrank {

namespace {

constexpr std::array<char, 4> kMagic = {'C', 'C', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw ValidationError("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

Param& ParamTable::add(const std::string& name, Tensor value, bool decay,
                       bool frozen_row0) {
  require(!contains(name), "ParamTable::add: duplicate name");
  Param p;
  p.grad = Tensor(value.shape());
  p.first_moment = Tensor(value.shape());
  p.second_moment = Tensor(value.shape());
  p.value = std::move(value);
  p.decay = decay;
  p.frozen_row0 = frozen_row0;
  return params_.emplace(name, std::move(p)).first->second;
}

Param& ParamTable::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractViolation("unknown parameter: " + name);
  return it->second;
}

const Param& ParamTable::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractViolation("unknown parameter: " + name);
  return it->second;
}

void ParamTable::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

std::size_t ParamTable::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamTable::save(std::ostream& out) const {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, p] : params_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const std::uint8_t flags = (p.decay ? 1 : 0) | (p.frozen_row0 ? 2 : 0);
    put_le<std::uint8_t>(out, flags);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t e : p.value.shape()) put_le<std::uint64_t>(out, e);
    for (double v : p.value.values())
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
}

ParamTable ParamTable::load(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ValidationError("not a parameter checkpoint");
  if (get_le<std::uint32_t>(in) != kVersion)
    throw ValidationError("unsupported checkpoint version");
  const auto count = get_le<std::uint32_t>(in);
  ParamTable table;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = get_le<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto flags = get_le<std::uint8_t>(in);
    const auto rank = get_le<std::uint32_t>(in);
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(get_le<std::uint64_t>(in));
    Tensor value(shape);
    for (double& v : value.values())
      v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    table.add(name, std::move(value), (flags & 1) != 0, (flags & 2) != 0);
  }
  return table;
}

bool ParamTable::same_values(const ParamTable& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (const auto& [name, p] : params_) {
    if (!other.contains(name) || !(p.value == other.at(name).value)) return false;
  }
  return true;
}

}  // namespace ccrank
