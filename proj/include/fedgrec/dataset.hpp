/*
 * Copyright 2026 The FedGRec Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDGREC_DATASET_HPP_
#define FEDGREC_DATASET_HPP_

// Bipartite user-item interaction data.
//
// Text format, one user per line: "uid iid iid ...", ASCII decimal,
// whitespace separated. User ids form a contiguous range starting at 0 in the
// training file. The item universe is 1 + the largest item id seen across the
// training and test files; there is no header declaring it.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedgrec/digest.hpp"
#include "fedgrec/errors.hpp"

namespace fedgrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

// Degree-normalized propagation weight 1 / sqrt(|N_t| |N_u|).
inline double normalization(std::size_t user_degree, std::size_t item_degree) {
  if (user_degree == 0 || item_degree == 0) {
    throw DegenerateNodeError("normalization: zero-degree node");
  }
  return 1.0 / std::sqrt(static_cast<double>(user_degree) *
                         static_cast<double>(item_degree));
}

class InteractionGraph {
 public:
  InteractionGraph() = default;

  // Takes per-user ascending item lists. Throws ValidationError on duplicate
  // or unsorted edges, out-of-range item ids and users without items.
  InteractionGraph(std::size_t num_items,
                   std::vector<std::vector<ItemId>> user_items)
      : num_items_(num_items), user_items_(std::move(user_items)) {
    item_degree_.assign(num_items_, 0);
    user_degree_.reserve(user_items_.size());
    for (std::size_t u = 0; u < user_items_.size(); ++u) {
      const auto& row = user_items_[u];
      if (row.empty()) {
        throw ValidationError("user " + std::to_string(u) +
                              " has no training interactions");
      }
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i] >= num_items_) {
          throw ValidationError("item id " + std::to_string(row[i]) +
                                " out of range for user " + std::to_string(u));
        }
        if (i > 0 && row[i] <= row[i - 1]) {
          throw ValidationError("user " + std::to_string(u) +
                                ": duplicate or unsorted item " +
                                std::to_string(row[i]));
        }
        ++item_degree_[row[i]];
      }
      user_degree_.push_back(row.size());
      num_interactions_ += row.size();
    }
  }

  std::size_t num_users() const { return user_items_.size(); }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_interactions() const { return num_interactions_; }

  std::span<const ItemId> items_of(UserId u) const { return user_items_.at(u); }
  std::size_t user_degree(UserId u) const { return user_degree_.at(u); }
  std::size_t item_degree(ItemId t) const { return item_degree_.at(t); }
  const std::vector<std::size_t>& user_degrees() const { return user_degree_; }
  const std::vector<std::size_t>& item_degrees() const { return item_degree_; }
  const std::vector<std::vector<ItemId>>& adjacency() const {
    return user_items_;
  }

  bool contains(UserId u, ItemId t) const {
    const auto& row = user_items_.at(u);
    return std::binary_search(row.begin(), row.end(), t);
  }

  friend bool operator==(const InteractionGraph&,
                         const InteractionGraph&) = default;

 private:
  std::size_t num_items_ = 0;
  std::size_t num_interactions_ = 0;
  std::vector<std::vector<ItemId>> user_items_;
  std::vector<std::size_t> user_degree_;
  std::vector<std::size_t> item_degree_;
};

struct DatasetSplit {
  InteractionGraph train;
  // Held-out items per user (ascending); empty for users without test data.
  std::vector<std::vector<ItemId>> test_items;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

inline double norm_coeff(const InteractionGraph& graph, UserId u, ItemId t) {
  if (u >= graph.num_users() || t >= graph.num_items()) {
    throw ValidationError("norm_coeff: node id out of range");
  }
  return normalization(graph.user_degree(u), graph.item_degree(t));
}

namespace detail {

// uid -> items, in file order. Validates syntax only.
inline std::map<std::size_t, std::vector<ItemId>> parse_interactions(
    std::istream& in) {
  std::map<std::size_t, std::vector<ItemId>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::uint64_t> values;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() &&
             (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) {
        ++pos;
      }
      if (pos >= line.size()) break;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t' &&
             line[end] != '\r') {
        ++end;
      }
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, v);
      if (ec != std::errc() || ptr != line.data() + end) {
        throw ParseError("malformed integer '" + line.substr(pos, end - pos) + "'",
                         line_no);
      }
      values.push_back(v);
      pos = end;
    }
    if (values.empty()) continue;
    if (values[0] > UINT32_MAX) throw ParseError("user id too large", line_no);
    if (rows.contains(values[0])) {
      throw ValidationError("user " + std::to_string(values[0]) +
                            " appears on more than one line (line " +
                            std::to_string(line_no) + ")");
    }
    std::vector<ItemId> items;
    items.reserve(values.size() - 1);
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (values[i] >= UINT32_MAX) throw ParseError("item id too large", line_no);
      items.push_back(static_cast<ItemId>(values[i]));
    }
    std::sort(items.begin(), items.end());
    if (std::adjacent_find(items.begin(), items.end()) != items.end()) {
      throw ValidationError("duplicate edge for user " +
                            std::to_string(values[0]) + " (line " +
                            std::to_string(line_no) + ")");
    }
    rows.emplace(values[0], std::move(items));
  }
  return rows;
}

inline std::map<std::size_t, std::vector<ItemId>> parse_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("dataset not found: " + path.string());
  return parse_interactions(in);
}

inline void write_rows(std::ostream& out,
                       const std::vector<std::vector<ItemId>>& rows,
                       bool skip_empty) {
  for (std::size_t u = 0; u < rows.size(); ++u) {
    if (skip_empty && rows[u].empty()) continue;
    out << u;
    for (ItemId t : rows[u]) out << ' ' << t;
    out << '\n';
  }
}

}  // namespace detail

// Builds a validated split from parsed train/test rows.
inline DatasetSplit make_split(
    const std::map<std::size_t, std::vector<ItemId>>& train_rows,
    const std::map<std::size_t, std::vector<ItemId>>& test_rows) {
  if (train_rows.empty()) throw ValidationError("training data is empty");
  const std::size_t num_users = train_rows.rbegin()->first + 1;
  if (train_rows.size() != num_users) {
    throw ValidationError("training user ids are not contiguous from 0");
  }
  std::size_t max_item = 0;
  bool any = false;
  for (const auto* rows : {&train_rows, &test_rows}) {
    for (const auto& [u, items] : *rows) {
      if (!items.empty()) {
        max_item = std::max<std::size_t>(max_item, items.back());
        any = true;
      }
    }
  }
  if (!any) throw ValidationError("no interactions");
  std::vector<std::vector<ItemId>> train(num_users);
  for (const auto& [u, items] : train_rows) train[u] = items;
  std::vector<std::vector<ItemId>> test(num_users);
  for (const auto& [u, items] : test_rows) {
    if (u >= num_users) {
      throw ValidationError("user " + std::to_string(u) +
                            " present in test but absent in train");
    }
    std::vector<ItemId> overlap;
    std::set_intersection(items.begin(), items.end(), train[u].begin(),
                          train[u].end(), std::back_inserter(overlap));
    if (!overlap.empty()) {
      throw ValidationError("user " + std::to_string(u) + ": item " +
                            std::to_string(overlap.front()) +
                            " is in both train and test");
    }
    test[u] = items;
  }
  return DatasetSplit{InteractionGraph(max_item + 1, std::move(train)),
                      std::move(test)};
}

inline DatasetSplit load_split(const std::filesystem::path& train_path,
                               const std::filesystem::path& test_path) {
  return make_split(detail::parse_file(train_path),
                    detail::parse_file(test_path));
}

inline void save_split(const DatasetSplit& split,
                       const std::filesystem::path& train_path,
                       const std::filesystem::path& test_path) {
  std::ofstream train(train_path, std::ios::binary);
  std::ofstream test(test_path, std::ios::binary);
  if (!train || !test) throw IoError("cannot write dataset files");
  detail::write_rows(train, split.train.adjacency(), false);
  detail::write_rows(test, split.test_items, true);
  if (!train || !test) throw IoError("write failed");
}

// SHA-256 over the canonical text serialization of the split.
inline std::string fingerprint(const DatasetSplit& split) {
  std::ostringstream train, test;
  detail::write_rows(train, split.train.adjacency(), false);
  detail::write_rows(test, split.test_items, true);
  return to_hex(Sha256()
                    .update(train.str())
                    .update(std::string(1, '\0'))
                    .update(test.str())
                    .finish());
}

struct BlockModelParams {
  std::size_t users = 200;
  std::size_t items = 300;
  std::size_t communities = 2;
  double p_in = 0.2;
  double p_out = 0.005;
  double holdout = 0.2;
  std::uint64_t seed = 7;
};

// Planted-partition bipartite graph. Users of community c link to items of
// community c with probability p_in and to other items with p_out. Per user,
// ceil(holdout * degree) edges are moved to the test side. Users that would
// end with no training edge are resampled.
//
// num_items of the result follows the loader convention (1 + max id seen),
// so writing and reloading the split is the identity.
inline DatasetSplit synth_blocks(const BlockModelParams& p) {
  if (p.communities == 0 || p.users == 0 || p.items == 0 ||
      p.users % p.communities != 0 || p.items % p.communities != 0) {
    throw ValidationError("communities must evenly divide users and items");
  }
  if (!(p.p_out >= 0.0 && p.p_out < p.p_in && p.p_in <= 1.0)) {
    throw ValidationError("require 0 <= p_out < p_in <= 1");
  }
  if (!(p.holdout >= 0.0 && p.holdout < 1.0)) {
    throw ValidationError("holdout must lie in [0, 1)");
  }
  constexpr int kMaxRetries = 1000;
  const std::size_t users_per = p.users / p.communities;
  const std::size_t items_per = p.items / p.communities;

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::map<std::size_t, std::vector<ItemId>> train_rows, test_rows;
  for (std::size_t u = 0; u < p.users; ++u) {
    const std::size_t cu = u / users_per;
    std::vector<ItemId> edges;
    std::size_t n_test = 0;
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxRetries) {
        throw GenerationError("user " + std::to_string(u) +
                              " has no training edge after " +
                              std::to_string(kMaxRetries) + " attempts");
      }
      edges.clear();
      for (std::size_t t = 0; t < p.items; ++t) {
        const double prob = (t / items_per == cu) ? p.p_in : p.p_out;
        if (unit(rng) < prob) edges.push_back(static_cast<ItemId>(t));
      }
      n_test = static_cast<std::size_t>(
          std::ceil(p.holdout * static_cast<double>(edges.size())));
      if (edges.size() > n_test) break;
    }
    std::shuffle(edges.begin(), edges.end(), rng);
    std::vector<ItemId> test(edges.begin(), edges.begin() + n_test);
    std::vector<ItemId> train(edges.begin() + n_test, edges.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    train_rows.emplace(u, std::move(train));
    if (!test.empty()) test_rows.emplace(u, std::move(test));
  }
  return make_split(train_rows, test_rows);
}

}  // namespace fedgrec

#endif  // FEDGREC_DATASET_HPP_
