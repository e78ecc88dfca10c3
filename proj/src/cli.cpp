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

#include "ccrank/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>

#include "ccrank/error.hpp"
#include "ccrank/evaluation.hpp"
#include "ccrank/ingest.hpp"
#include "ccrank/model.hpp"
#include "ccrank/run_config.hpp"
#include "ccrank/synth.hpp"
#include "ccrank/training.hpp"
#include "ccrank/verify.hpp"

namespace ccrank {

namespace {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("missing required setting '") + key + "'");
}

// A flag bound to a config key; applied after the file and environment.
struct FlagBinding {
  std::string key;
  std::string value;
  CLI::Option* opt = nullptr;
};

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err, char** env) : out_(out), err_(err), env_(env) {}

  int run(int argc, const char* const* argv);

 private:
  void add_common(CLI::App* sub);
  void add_value(CLI::App* sub, const std::string& flag, const std::string& key,
                 const std::string& help);
  void add_negation(CLI::App* sub, const std::string& flag, const std::string& key,
                    const std::string& help);
  RunConfig resolve(CLI::App* sub);

  void ingest(const RunConfig& c);
  void train(const RunConfig& c);
  void eval(const RunConfig& c);
  int verify(const RunConfig& c);
  void synth(const RunConfig& c);

  SplitDataset load_split(const RunConfig& c);

  std::ostream& out_;
  std::ostream& err_;
  char** env_;
  std::map<CLI::App*, std::string> config_path_;
  std::map<CLI::App*, std::vector<std::string>> sets_;
  std::map<CLI::App*, std::vector<std::unique_ptr<FlagBinding>>> bindings_;
  std::map<CLI::App*, std::vector<std::pair<std::string, CLI::Option*>>> negations_;
  std::string corrupt_;
  std::string parse_file_;  // prefixes parse errors
};

void Cli::add_value(CLI::App* sub, const std::string& flag, const std::string& key,
                    const std::string& help) {
  auto b = std::make_unique<FlagBinding>();
  b->key = key;
  b->opt = sub->add_option(flag, b->value, help);
  bindings_[sub].push_back(std::move(b));
}

void Cli::add_negation(CLI::App* sub, const std::string& flag, const std::string& key,
                       const std::string& help) {
  negations_[sub].emplace_back(key, sub->add_flag(flag, help));
}

void Cli::add_common(CLI::App* sub) {
  sub->add_option("--config", config_path_[sub], "key = value configuration file");
  sub->add_option("--set", sets_[sub], "override any configuration key (key=value)");
  add_value(sub, "--seed", "seed", "random seed");
}

RunConfig Cli::resolve(CLI::App* sub) {
  RunConfig c;
  if (!config_path_[sub].empty()) c.apply_file(config_path_[sub]);
  c.apply_env(env_);
  for (const auto& b : bindings_[sub])
    if (b->opt->count() > 0) c.set(b->key, b->value);
  for (const auto& [key, opt] : negations_[sub])
    if (opt->count() > 0) c.set(key, "false");
  for (const std::string& kv : sets_[sub]) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  return c;
}

std::string source_fingerprint(const std::string& text) {
  return std::to_string(text.size()) + ":" +
         std::to_string(std::hash<std::string_view>{}(text));
}

void Cli::ingest(const RunConfig& c) {
  require_path(c.data, "data");
  require_path(c.cache, "cache");
  const std::string text = read_file(c.data);
  const std::vector<std::pair<std::string, std::string>> meta = {
      {"source", c.data},
      {"source_fingerprint", source_fingerprint(text)},
      {"min_count", std::to_string(c.min_count)},
      {"holdout", std::to_string(c.holdout)}};

  if (fs::exists(c.cache)) {
    std::ifstream in(c.cache);
    std::vector<std::pair<std::string, std::string>> old;
    try {
      read_split(in, &old);
      bool same = true;
      for (const auto& kv : meta)
        if (kv.first != "source")
          same &= std::find(old.begin(), old.end(), kv) != old.end();
      if (same) {
        out_ << "up to date: " << c.cache << '\n';
        return;
      }
    } catch (const Error&) {
      // Unreadable cache: rebuild it.
    }
  }

  std::istringstream in(text);
  parse_file_ = c.data;
  const ParsedCheckins parsed = parse_checkins(in);
  if (parsed.checkins.empty()) throw EmptyDatasetError(c.data + ": no check-ins");
  SplitDataset split = filter_and_split(parsed.checkins, c.min_count, c.holdout);
  // Report ids from the file rather than the parser's dense ids.
  for (auto& id : split.user_source_ids) id = parsed.user_ids[static_cast<std::size_t>(id)];
  for (std::size_t p = 1; p < split.poi_source_ids.size(); ++p)
    split.poi_source_ids[p] = parsed.poi_ids[static_cast<std::size_t>(split.poi_source_ids[p])];

  auto out = open_out(c.cache);
  write_split(out, split, meta);
  out.close();
  write_config_echo(c.cache, c);
  out_ << "ingested users=" << split.train.size() << " pois=" << split.stats.num_pois
       << " checkins=" << split.train_size() + split.eval_size()
       << " train=" << split.train_size() << " eval=" << split.eval_size()
       << " cache=" << c.cache << '\n';
}

SplitDataset Cli::load_split(const RunConfig& c) {
  if (!c.cache.empty() && fs::exists(c.cache)) {
    std::ifstream in(c.cache);
    return read_split(in);
  }
  if (!c.data.empty()) {
    const std::string text = read_file(c.data);
    std::istringstream in(text);
    parse_file_ = c.data;
    return filter_and_split(parse_checkins(in).checkins, c.min_count, c.holdout);
  }
  if (!c.cache.empty()) throw IoError("cannot open " + c.cache);
  throw ConfigError("missing required setting 'cache' (or 'data')");
}

void Cli::train(const RunConfig& c) {
  require_path(c.checkpoint, "checkpoint");
  ModelConfig mc = c.model;
  mc.num_pois = std::max(mc.num_pois, 1);
  mc.validate();  // config errors surface before any data is read
  c.train.validate();
  const SplitDataset split = load_split(c);
  mc.num_pois = split.stats.num_pois;

  out_ << "seed=" << c.seed << '\n';
  auto log = open_out(c.checkpoint + ".log");
  std::ostringstream tee;
  struct Tee : std::streambuf {
    std::ostream *a, *b;
    int overflow(int ch) override {
      if (ch != EOF) {
        a->put(static_cast<char>(ch));
        b->put(static_cast<char>(ch));
      }
      return ch;
    }
  } buf;
  buf.a = &out_;
  buf.b = &log;
  std::ostream both(&buf);
  const TrainResult r = ccrank::train(split, mc, c.train, &both);
  save_checkpoint_file(c.checkpoint, r.best);
  write_config_echo(c.checkpoint, c);
  out_ << "trained best_epoch=" << r.best_epoch << " epochs_run=" << r.log.size() - 1
       << " stop=\"" << r.stop_reason << "\" checkpoint=" << c.checkpoint << '\n';
  if (r.diverged) throw NumericFault("training diverged; last finite checkpoint saved to " +
                                     c.checkpoint);
}

void Cli::eval(const RunConfig& c) {
  require_path(c.checkpoint, "checkpoint");
  const Checkpoint ck = load_checkpoint_file(c.checkpoint);
  const SplitDataset split = load_split(c);
  DatasetStats stats = split.stats;
  stats.mu_lat = ck.stats.mu_lat;
  stats.sigma_lat = ck.stats.sigma_lat;
  stats.mu_lon = ck.stats.mu_lon;
  stats.sigma_lon = ck.stats.sigma_lon;

  const Model model(ck.config);
  const InstanceSet set = make_eval_set(split);
  std::vector<std::size_t> counts;
  for (const auto& t : split.train) counts.push_back(t.size());
  EvalContext ctx;
  ctx.stats = &stats;
  ctx.poi_coords = split.poi_coords;
  ctx.num_pois = std::min(ck.config.num_pois, split.stats.num_pois);
  ctx.history_len = static_cast<std::size_t>(ck.config.history_len);
  ctx.user_train_counts = counts;
  const Scorer scorer = model_scorer(model, ck.params);

  std::ofstream file;
  if (!c.report.empty()) file = open_out(c.report);
  std::ostream& rep = c.report.empty() ? out_ : file;
  if (!c.sweep.empty()) {
    write_sweep(rep, pool_size_sweep(set, scorer, ctx, c.sweep, c.seed));
  } else {
    const RankReport r = evaluate(set, scorer, ctx, {c.pool_mode, c.pool_size, c.seed});
    write_report(rep, r);
    if (r.skipped)
      err_ << "ccrank: warning: skipped " << r.skipped
           << " instances whose POIs are outside the model tables\n";
    if (!c.ranks.empty()) {
      auto dump = open_out(c.ranks);
      write_rank_dump(dump, r, set);
    }
  }
  if (!c.report.empty()) write_config_echo(c.report, c);
}

int Cli::verify(const RunConfig& c) {
  const VerifySummary s = run_verify({c.seed, corrupt_}, out_);
  out_ << "checks passed=" << s.passed << " failed=" << s.failed << '\n';
  return s.failed == 0 ? kExitOk : kExitFailure;
}

void Cli::synth(const RunConfig& c) {
  require_path(c.out, "out");
  const std::vector<CheckIn> data = synthesize(c.synth);
  auto out = open_out(c.out);
  write_checkins(out, data);
  out.close();
  write_config_echo(c.out, c);
  out_ << "wrote " << data.size() << " check-ins (" << synth_mode_name(c.synth.mode)
       << ", seed=" << c.seed << ") to " << c.out << '\n';
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int Cli::run(int argc, const char* const* argv) {
  CLI::App app{"Candidate-conditioned next-POI ranking: ingest, train, evaluate, verify."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand help for every subcommand");

  CLI::App* ingest = app.add_subcommand("ingest", "filter and split a check-in file into a cache");
  add_common(ingest);
  add_value(ingest, "--data", "data", "check-in file (user,poi,timestamp,lat,lon)");
  add_value(ingest, "--cache", "cache", "split cache to write");
  add_value(ingest, "--min-count", "min_count", "minimum check-ins per user and POI");
  add_value(ingest, "--holdout", "holdout", "most recent check-ins held out per user");

  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train);
  add_value(train, "--cache", "cache", "split cache from ingest");
  add_value(train, "--data", "data", "raw check-ins, used when no cache is given");
  add_value(train, "--checkpoint", "checkpoint", "checkpoint to write");
  add_value(train, "--epochs", "epochs", "maximum epochs");
  add_value(train, "--k-negatives", "k_negatives", "negatives per training instance");
  add_value(train, "--lr", "lr", "learning rate");
  add_value(train, "--batch", "batch", "batch size");
  add_value(train, "--patience", "patience", "early-stopping patience in epochs");
  add_value(train, "--d", "d", "model width");
  add_value(train, "--heads", "heads", "attention heads");
  add_value(train, "--layers", "layers", "candidate-conditioned blocks");
  add_value(train, "--history-len", "history_len", "history length L");
  add_negation(train, "--no-temporal-bias", "temporal_bias", "drop the time-gap bias");
  add_negation(train, "--no-spatial-bias", "spatial_bias", "drop the distance bias");
  add_negation(train, "--no-history-attn", "history_attn", "skip history self-attention");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
  add_common(eval);
  add_value(eval, "--checkpoint", "checkpoint", "checkpoint from train");
  add_value(eval, "--cache", "cache", "split cache from ingest");
  add_value(eval, "--data", "data", "raw check-ins, used when no cache is given");
  add_value(eval, "--pool", "pool", "candidate pool: sampled or full");
  add_value(eval, "--pool-size", "pool_size", "sampled pool size, positive included");
  add_value(eval, "--sweep", "sweep", "comma-separated pool sizes; prints HR@10 per size");
  add_value(eval, "--report", "report", "report file (default stdout)");
  add_value(eval, "--ranks", "ranks", "per-instance rank dump");

  CLI::App* verify = app.add_subcommand("verify", "run gradient, oracle and invariant checks");
  add_common(verify);
  verify->add_option("--corrupt", corrupt_, "test hook: corrupt this parameter's gradient");

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic check-in file");
  add_common(synth);
  add_value(synth, "--out", "out", "file to write");
  add_value(synth, "--mode", "synth_mode", "anchors or cycle");
  add_value(synth, "--users", "synth_users", "number of users");
  add_value(synth, "--pois", "synth_pois", "number of POIs");
  add_value(synth, "--length", "synth_length", "check-ins per user");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out_ << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out_ << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err_ << "ccrank: error: usage: " << one_line(e.what()) << '\n';
    return kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const RunConfig c = resolve(sub);
    if (sub == ingest) this->ingest(c);
    if (sub == train) this->train(c);
    if (sub == eval) this->eval(c);
    if (sub == synth) this->synth(c);
    if (sub == verify) return this->verify(c);
    return kExitOk;
  } catch (const IoError& e) {
    err_ << "ccrank: error: io: " << one_line(e.what()) << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    err_ << "ccrank: error: config: " << one_line(e.what()) << '\n';
    return kExitConfig;
  } catch (const PoolError& e) {
    err_ << "ccrank: error: config: " << one_line(e.what()) << '\n';
    return kExitConfig;
  } catch (const SamplingError& e) {
    err_ << "ccrank: error: config: " << one_line(e.what()) << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err_ << "ccrank: error: parse: " << parse_file_ << ": " << one_line(e.what()) << '\n';
    return kExitData;
  } catch (const ValidationError& e) {
    err_ << "ccrank: error: validation: " << one_line(e.what()) << '\n';
    return kExitData;
  } catch (const EmptyDatasetError& e) {
    err_ << "ccrank: error: empty-dataset: " << one_line(e.what()) << '\n';
    return kExitData;
  } catch (const DegenerateDatasetError& e) {
    err_ << "ccrank: error: degenerate-dataset: " << one_line(e.what()) << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err_ << "ccrank: error: " << one_line(e.what()) << '\n';
    return kExitFailure;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            char** env) {
  Cli cli(out, err, env);
  return cli.run(argc, argv);
}

}  // namespace ccrank
