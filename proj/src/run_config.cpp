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

#include "ccrank/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ccrank/error.hpp"

namespace ccrank {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty())
    throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + v + "' for " + key);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CCRANK_STR(key, member)                                                   \
  {                                                                               \
    key, {[](RunConfig& c, const std::string&, const std::string& v) { member = v; }, \
          [](const RunConfig& c) { return member; } }                            \
  }
#define CCRANK_INT(key, member)                                                        \
  {                                                                                    \
    key, {[](RunConfig& c, const std::string& k, const std::string& v) {               \
            member = parse_number<int>(k, v);                                          \
          },                                                                           \
          [](const RunConfig& c) { return std::to_string(member); } }                 \
  }
#define CCRANK_DBL(key, member)                                                        \
  {                                                                                    \
    key, {[](RunConfig& c, const std::string& k, const std::string& v) {               \
            member = parse_number<double>(k, v);                                       \
          },                                                                           \
          [](const RunConfig& c) { return fmt(member); } }                            \
  }
#define CCRANK_BOOL(key, member)                                                                 \
  {                                                                                              \
    key, {[](RunConfig& c, const std::string& k, const std::string& v) { member = parse_bool(k, v); }, \
          [](const RunConfig& c) { return fmt(member); } }                                      \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      CCRANK_STR("data", c.data),
      CCRANK_STR("cache", c.cache),
      CCRANK_STR("checkpoint", c.checkpoint),
      CCRANK_STR("report", c.report),
      CCRANK_STR("ranks", c.ranks),
      CCRANK_STR("out", c.out),
      CCRANK_INT("min_count", c.min_count),
      CCRANK_INT("holdout", c.holdout),
      {"pool",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.pool_mode = parse_pool_mode(v);
        },
        [](const RunConfig& c) { return std::string(pool_mode_name(c.pool_mode)); }}},
      CCRANK_INT("pool_size", c.pool_size),
      {"sweep",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.sweep = v.empty() ? std::vector<int>{} : parse_int_list(v);
        },
        [](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.sweep.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.sweep[i]);
          return s;
        }}},
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.seed = parse_number<std::uint64_t>(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      CCRANK_INT("d", c.model.d),
      CCRANK_INT("heads", c.model.heads),
      CCRANK_INT("layers", c.model.layers),
      CCRANK_INT("history_len", c.model.history_len),
      CCRANK_INT("ffn_hidden", c.model.ffn_hidden),
      CCRANK_INT("head_hidden", c.model.head_hidden),
      CCRANK_DBL("dropout", c.model.dropout),
      CCRANK_BOOL("history_attn", c.model.use_history_self_attn),
      CCRANK_BOOL("temporal_bias", c.model.use_temporal_bias),
      CCRANK_BOOL("spatial_bias", c.model.use_spatial_bias),
      CCRANK_BOOL("parallel_kernels", c.model.parallel_kernels),
      CCRANK_DBL("lr", c.train.lr),
      CCRANK_INT("batch", c.train.batch),
      CCRANK_INT("epochs", c.train.max_epochs),
      CCRANK_INT("k_negatives", c.train.k_negatives),
      CCRANK_DBL("label_smoothing", c.train.label_smoothing),
      CCRANK_DBL("w_explore", c.train.w_explore),
      CCRANK_INT("patience", c.train.patience),
      CCRANK_DBL("weight_decay", c.train.weight_decay),
      CCRANK_BOOL("add_one_smoothing", c.train.add_one_smoothing),
      CCRANK_INT("val_pool_size", c.train.val_pool_size),
      {"synth_mode",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.synth.mode = parse_synth_mode(v);
        },
        [](const RunConfig& c) { return std::string(synth_mode_name(c.synth.mode)); }}},
      CCRANK_INT("synth_users", c.synth.users),
      CCRANK_INT("synth_pois", c.synth.pois),
      CCRANK_INT("synth_length", c.synth.length),
      CCRANK_INT("synth_cluster_size", c.synth.cluster_size),
      CCRANK_INT("synth_route_len", c.synth.route_len),
  };
  return f;
}

#undef CCRANK_STR
#undef CCRANK_INT
#undef CCRANK_DBL
#undef CCRANK_BOOL

}  // namespace

RunConfig::RunConfig() = default;

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown key '" + key + "'");
  it->second.set(*this, key, trim(value));
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    try {
      set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    apply_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void RunConfig::apply_env(char** env) {
  if (!env) return;
  const std::string prefix = "CCRANK_";
  for (char** e = env; *e; ++e) {
    const std::string kv = *e;
    if (kv.rfind(prefix, 0) != 0) continue;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    std::string key = kv.substr(prefix.size(), eq - prefix.size());
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    set(key, kv.substr(eq + 1));
  }
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& [k, f] : fields()) s += k + "=" + f.get(*this) + "\n";
  return s;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& [name, f] : fields()) k.push_back(name);
  return k;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<int>("list", trim(item)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

void write_config_echo(const std::string& artifact, const RunConfig& config) {
  const std::string path = artifact + ".config";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "# effective configuration\n" << config.to_text();
}

}  // namespace ccrank
