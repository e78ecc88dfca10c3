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

#include "ccrank/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <string_view>

#include "ccrank/error.hpp"

namespace ccrank {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if constexpr (std::is_floating_point_v<T>) {
    if (*first == '+') ++first;
  }
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct RawRow {
  std::int64_t user;
  std::int64_t poi;
  std::int64_t timestamp;
  double lat;
  double lon;
};

RawRow parse_row(std::string_view line, std::size_t line_no) {
  const auto fields = split_commas(line);
  if (fields.size() != 5)
    throw ParseError(line_no, "expected 5 comma-separated fields, got " +
                                  std::to_string(fields.size()));
  RawRow r{};
  if (!parse_number(fields[0], r.user)) throw ParseError(line_no, "bad user_id");
  if (!parse_number(fields[1], r.poi)) throw ParseError(line_no, "bad poi_id");
  if (!parse_number(fields[2], r.timestamp)) throw ParseError(line_no, "bad timestamp");
  if (!parse_number(fields[3], r.lat)) throw ParseError(line_no, "bad latitude");
  if (!parse_number(fields[4], r.lon)) throw ParseError(line_no, "bad longitude");
  return r;
}

void validate_coords(double lat, double lon, std::size_t line_no) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0))
    throw ValidationError("line " + std::to_string(line_no) +
                          ": coordinates out of range");
}

// Maps sorted distinct source ids onto [offset, offset + n).
std::map<std::int64_t, std::int32_t> densify(std::vector<std::int64_t> ids,
                                             std::int32_t offset) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::map<std::int64_t, std::int32_t> m;
  for (std::size_t i = 0; i < ids.size(); ++i)
    m.emplace(ids[i], static_cast<std::int32_t>(i) + offset);
  return m;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ParsedCheckins parse_checkins(std::istream& in) {
  std::vector<RawRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    RawRow r = parse_row(t, line_no);
    validate_coords(r.lat, r.lon, line_no);
    rows.push_back(r);
  }

  std::vector<std::int64_t> users, pois;
  for (const auto& r : rows) {
    users.push_back(r.user);
    pois.push_back(r.poi);
  }
  const auto user_map = densify(users, 0);
  const auto poi_map = densify(pois, 1);

  ParsedCheckins out;
  out.user_ids.resize(user_map.size());
  for (const auto& [src, dense] : user_map) out.user_ids[dense] = src;
  out.poi_ids.assign(poi_map.size() + 1, -1);
  for (const auto& [src, dense] : poi_map) out.poi_ids[dense] = src;
  out.checkins.reserve(rows.size());
  for (const auto& r : rows)
    out.checkins.push_back({user_map.at(r.user), poi_map.at(r.poi), r.timestamp,
                            r.lat, r.lon});
  return out;
}

std::size_t SplitDataset::train_size() const {
  std::size_t n = 0;
  for (const auto& u : train) n += u.size();
  return n;
}

std::size_t SplitDataset::eval_size() const {
  std::size_t n = 0;
  for (const auto& u : eval) n += u.size();
  return n;
}

std::vector<CheckIn> SplitDataset::all_checkins() const {
  std::vector<CheckIn> out;
  out.reserve(train_size() + eval_size());
  for (std::size_t u = 0; u < train.size(); ++u) {
    out.insert(out.end(), train[u].begin(), train[u].end());
    out.insert(out.end(), eval[u].begin(), eval[u].end());
  }
  return out;
}

SplitDataset filter_and_split(std::span<const CheckIn> checkins, int min_count,
                              int holdout) {
  if (checkins.empty()) throw EmptyDatasetError("no check-ins to split");
  require(min_count >= 0 && holdout >= 0, "filter_and_split: negative threshold");
  const std::int64_t user_min = std::max<std::int64_t>(min_count, holdout + 1);

  std::vector<bool> keep(checkins.size(), true);
  for (bool changed = true; changed;) {
    changed = false;
    std::map<UserId, std::int64_t> user_count;
    for (std::size_t i = 0; i < checkins.size(); ++i)
      if (keep[i]) ++user_count[checkins[i].user];
    for (std::size_t i = 0; i < checkins.size(); ++i) {
      if (keep[i] && user_count[checkins[i].user] < user_min) {
        keep[i] = false;
        changed = true;
      }
    }
    std::map<PoiId, std::int64_t> poi_count;
    for (std::size_t i = 0; i < checkins.size(); ++i)
      if (keep[i]) ++poi_count[checkins[i].poi];
    for (std::size_t i = 0; i < checkins.size(); ++i) {
      if (keep[i] && poi_count[checkins[i].poi] < min_count) {
        keep[i] = false;
        changed = true;
      }
    }
  }

  std::vector<std::int64_t> users, pois;
  for (std::size_t i = 0; i < checkins.size(); ++i) {
    if (!keep[i]) continue;
    users.push_back(checkins[i].user);
    pois.push_back(checkins[i].poi);
  }
  if (users.empty()) throw EmptyDatasetError("every check-in was filtered away");
  const auto user_map = densify(users, 0);
  const auto poi_map = densify(pois, 1);

  SplitDataset split;
  split.user_source_ids.resize(user_map.size());
  for (const auto& [src, dense] : user_map) split.user_source_ids[dense] = src;
  split.poi_source_ids.assign(poi_map.size() + 1, -1);
  for (const auto& [src, dense] : poi_map) split.poi_source_ids[dense] = src;
  split.poi_coords.assign(poi_map.size() + 1, LatLon{});

  std::vector<bool> coord_seen(poi_map.size() + 1, false);
  std::vector<std::vector<CheckIn>> per_user(user_map.size());
  for (std::size_t i = 0; i < checkins.size(); ++i) {
    if (!keep[i]) continue;
    CheckIn c = checkins[i];
    c.user = user_map.at(c.user);
    c.poi = poi_map.at(c.poi);
    if (!coord_seen[c.poi]) {
      split.poi_coords[c.poi] = {c.lat, c.lon};
      coord_seen[c.poi] = true;
    }
    per_user[c.user].push_back(c);
  }

  split.train.resize(per_user.size());
  split.eval.resize(per_user.size());
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    auto& seq = per_user[u];
    std::stable_sort(seq.begin(), seq.end(), [](const CheckIn& a, const CheckIn& b) {
      return a.timestamp < b.timestamp;
    });
    const auto cut = seq.end() - holdout;
    split.train[u].assign(seq.begin(), cut);
    split.eval[u].assign(cut, seq.end());
  }
  split.stats = compute_stats(split.train, static_cast<int>(poi_map.size()));
  return split;
}

DatasetStats compute_stats(const std::vector<std::vector<CheckIn>>& train,
                           int num_pois) {
  std::size_t n = 0;
  double sum_lat = 0.0, sum_lon = 0.0;
  for (const auto& seq : train) {
    for (const auto& c : seq) {
      sum_lat += c.lat;
      sum_lon += c.lon;
      ++n;
    }
  }
  if (n == 0) throw EmptyDatasetError("training split is empty");

  DatasetStats s;
  s.num_users = static_cast<int>(train.size());
  s.num_pois = num_pois;
  s.mu_lat = sum_lat / static_cast<double>(n);
  s.mu_lon = sum_lon / static_cast<double>(n);
  double var_lat = 0.0, var_lon = 0.0;
  s.popularity.assign(static_cast<std::size_t>(num_pois) + 1, 0);
  for (const auto& seq : train) {
    for (const auto& c : seq) {
      var_lat += (c.lat - s.mu_lat) * (c.lat - s.mu_lat);
      var_lon += (c.lon - s.mu_lon) * (c.lon - s.mu_lon);
      require(c.poi >= 1 && c.poi <= num_pois, "compute_stats: poi id out of range");
      ++s.popularity[static_cast<std::size_t>(c.poi)];
    }
  }
  s.sigma_lat = std::sqrt(var_lat / static_cast<double>(n));
  s.sigma_lon = std::sqrt(var_lon / static_cast<double>(n));
  if (!(s.sigma_lat > 0.0) || !(s.sigma_lon > 0.0))
    throw DegenerateDatasetError("zero coordinate variance in training split");
  return s;
}

void write_split(std::ostream& out, const SplitDataset& split,
                 const std::vector<std::pair<std::string, std::string>>& meta) {
  const auto& s = split.stats;
  out << "# ccrank split cache\n";
  out << "format=ccrank-split-v1\n";
  for (const auto& [k, v] : meta) out << k << '=' << v << '\n';
  out << "users=" << s.num_users << '\n';
  out << "pois=" << s.num_pois << '\n';
  out << "checkins=" << split.train_size() + split.eval_size() << '\n';
  out << "train_checkins=" << split.train_size() << '\n';
  out << "eval_checkins=" << split.eval_size() << '\n';
  out << "mu_lat=" << fmt_double(s.mu_lat) << '\n';
  out << "sigma_lat=" << fmt_double(s.sigma_lat) << '\n';
  out << "mu_lon=" << fmt_double(s.mu_lon) << '\n';
  out << "sigma_lon=" << fmt_double(s.sigma_lon) << '\n';
  out << "[pois]\n";
  for (std::size_t p = 1; p < split.poi_coords.size(); ++p)
    out << p << ',' << split.poi_source_ids[p] << ','
        << fmt_double(split.poi_coords[p].lat) << ','
        << fmt_double(split.poi_coords[p].lon) << '\n';
  out << "[users]\n";
  for (std::size_t u = 0; u < split.user_source_ids.size(); ++u)
    out << u << ',' << split.user_source_ids[u] << '\n';
  auto rows = [&](const char* tag, const std::vector<std::vector<CheckIn>>& seqs) {
    out << tag << '\n';
    for (const auto& seq : seqs)
      for (const auto& c : seq)
        out << c.user << ',' << c.poi << ',' << c.timestamp << ','
            << fmt_double(c.lat) << ',' << fmt_double(c.lon) << '\n';
  };
  rows("[train]", split.train);
  rows("[eval]", split.eval);
}

SplitDataset read_split(std::istream& in,
                        std::vector<std::pair<std::string, std::string>>* meta) {
  SplitDataset split;
  std::map<std::string, std::string> header;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<CheckIn>>* target = nullptr;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      section = std::string(t);
      if (section == "[pois]") {
        const int m = std::stoi(header.at("pois"));
        split.poi_coords.assign(static_cast<std::size_t>(m) + 1, LatLon{});
        split.poi_source_ids.assign(static_cast<std::size_t>(m) + 1, -1);
      } else if (section == "[users]") {
        const int n = std::stoi(header.at("users"));
        split.user_source_ids.assign(static_cast<std::size_t>(n), 0);
        split.train.assign(static_cast<std::size_t>(n), {});
        split.eval.assign(static_cast<std::size_t>(n), {});
      }
      target = section == "[train]" ? &split.train
               : section == "[eval]" ? &split.eval
                                     : nullptr;
      continue;
    }
    if (section.empty()) {
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) throw ParseError(line_no, "expected key=value");
      header[std::string(t.substr(0, eq))] = std::string(t.substr(eq + 1));
      continue;
    }
    const auto f = split_commas(t);
    if (section == "[pois]") {
      std::int64_t id = 0, src = 0;
      double lat = 0, lon = 0;
      if (f.size() != 4 || !parse_number(f[0], id) || !parse_number(f[1], src) ||
          !parse_number(f[2], lat) || !parse_number(f[3], lon) || id < 1 ||
          static_cast<std::size_t>(id) >= split.poi_coords.size())
        throw ParseError(line_no, "bad poi row");
      split.poi_coords[static_cast<std::size_t>(id)] = {lat, lon};
      split.poi_source_ids[static_cast<std::size_t>(id)] = src;
    } else if (section == "[users]") {
      std::int64_t id = 0, src = 0;
      if (f.size() != 2 || !parse_number(f[0], id) || !parse_number(f[1], src) ||
          id < 0 || static_cast<std::size_t>(id) >= split.user_source_ids.size())
        throw ParseError(line_no, "bad user row");
      split.user_source_ids[static_cast<std::size_t>(id)] = src;
    } else if (target) {
      const RawRow r = parse_row(t, line_no);
      if (r.user < 0 || static_cast<std::size_t>(r.user) >= target->size())
        throw ParseError(line_no, "user id out of range");
      (*target)[static_cast<std::size_t>(r.user)].push_back(
          {static_cast<UserId>(r.user), static_cast<PoiId>(r.poi), r.timestamp, r.lat,
           r.lon});
    } else {
      throw ParseError(line_no, "unknown section " + section);
    }
  }
  if (header.count("format") == 0 || header.at("format") != "ccrank-split-v1")
    throw ValidationError("not a ccrank split cache");
  split.stats = compute_stats(split.train, std::stoi(header.at("pois")));
  // Stored statistics win over recomputation so caches reproduce exactly.
  split.stats.mu_lat = std::stod(header.at("mu_lat"));
  split.stats.sigma_lat = std::stod(header.at("sigma_lat"));
  split.stats.mu_lon = std::stod(header.at("mu_lon"));
  split.stats.sigma_lon = std::stod(header.at("sigma_lon"));
  if (meta) {
    meta->clear();
    for (const auto& [k, v] : header) meta->emplace_back(k, v);
  }
  return split;
}

}  // namespace ccrank
