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

#ifndef FEDGREC_EVAL_HPP_
#define FEDGREC_EVAL_HPP_

// Top-N ranking metrics. Items in a user's training set are never ranked.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedgrec/client.hpp"
#include "fedgrec/dataset.hpp"
#include "fedgrec/embedding.hpp"
#include "fedgrec/errors.hpp"
#include "fedgrec/parallel.hpp"
#include "fedgrec/server.hpp"

namespace fedgrec::eval {

inline constexpr std::size_t kDefaultCutoff = 20;

// Ideal DCG normalizer: capped sums min(|truth|, N) ideal terms, uncapped sums
// |truth| terms.
enum class IdealDcg { kCapped, kUncapped };

using RankedList = std::vector<ItemId>;

// Top `cutoff` items by descending score, ties by ascending id, skipping the
// ascending `excluded` ids. Shorter when fewer candidates exist.
inline RankedList rank_items(std::span<const double> scores, std::span<const ItemId> excluded,
                             std::size_t cutoff) {
  if (cutoff == 0) throw ValidationError("rank_items: cutoff must be >= 1");
  RankedList candidates;
  candidates.reserve(scores.size());
  auto ex = excluded.begin();
  for (ItemId t = 0; t < scores.size(); ++t) {
    while (ex != excluded.end() && *ex < t) ++ex;
    if (ex != excluded.end() && *ex == t) continue;
    candidates.push_back(t);
  }
  const std::size_t k = std::min(cutoff, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), [&](ItemId a, ItemId b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  candidates.resize(k);
  return candidates;
}

inline std::size_t count_hits(const RankedList& ranked, std::span<const ItemId> truth) {
  std::size_t hits = 0;
  for (ItemId t : ranked) hits += std::binary_search(truth.begin(), truth.end(), t) ? 1 : 0;
  return hits;
}

// |hits| / |truth|; nullopt (user skipped) for an empty truth set.
inline std::optional<double> recall_at_n(const RankedList& ranked, std::span<const ItemId> truth) {
  if (truth.empty()) return std::nullopt;
  return static_cast<double>(count_hits(ranked, truth)) / static_cast<double>(truth.size());
}

inline double discount(std::size_t rank) {
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

inline std::optional<double> ndcg_at_n(const RankedList& ranked, std::span<const ItemId> truth,
                                       std::size_t cutoff, IdealDcg ideal = IdealDcg::kCapped) {
  if (truth.empty()) return std::nullopt;
  double dcg = 0.0;
  for (std::size_t n = 0; n < ranked.size() && n < cutoff; ++n) {
    if (std::binary_search(truth.begin(), truth.end(), ranked[n])) dcg += discount(n + 1);
  }
  const std::size_t terms =
      ideal == IdealDcg::kCapped ? std::min(truth.size(), cutoff) : truth.size();
  double idcg = 0.0;
  for (std::size_t n = 1; n <= terms; ++n) idcg += discount(n);
  return dcg / idcg;
}

struct UserMetrics {
  UserId user = 0;
  std::size_t num_test = 0;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct EvaluationResult {
  double mean_recall = 0.0;
  double mean_ndcg = 0.0;
  std::vector<UserMetrics> per_user;
};

// Fills the N scores of one user.
using Scorer = std::function<void(UserId, std::span<double>)>;

// Averages over users with a nonempty test list.
inline EvaluationResult evaluate(const Scorer& scorer, const DatasetSplit& split,
                                 std::size_t cutoff = kDefaultCutoff,
                                 IdealDcg ideal = IdealDcg::kCapped) {
  const auto& graph = split.train;
  std::vector<UserId> users;
  for (UserId u = 0; u < graph.num_users(); ++u) {
    if (u < split.test_items.size() && !split.test_items[u].empty()) users.push_back(u);
  }
  if (users.empty()) throw ValidationError("evaluate: no users with test items");
  EvaluationResult out;
  out.per_user.resize(users.size());
  parallel_for(users.size(), [&](std::size_t i) {
    const UserId u = users[i];
    Vector scores(graph.num_items());
    scorer(u, scores);
    const auto ranked = rank_items(scores, graph.items_of(u), cutoff);
    const auto& truth = split.test_items[u];
    out.per_user[i] = UserMetrics{u, truth.size(), *recall_at_n(ranked, truth),
                                  *ndcg_at_n(ranked, truth, cutoff, ideal)};
  });
  for (const auto& m : out.per_user) {
    out.mean_recall += m.recall;
    out.mean_ndcg += m.ndcg;
  }
  out.mean_recall /= static_cast<double>(users.size());
  out.mean_ndcg /= static_cast<double>(users.size());
  return out;
}

// Users are represented by their own layered embeddings, items by the store.
inline EvaluationResult evaluate_model(std::span<const UserState> clients, const ItemStore& items,
                                       const AggregationScheme& scheme, const DatasetSplit& split,
                                       std::size_t cutoff = kDefaultCutoff,
                                       IdealDcg ideal = IdealDcg::kCapped) {
  if (clients.size() != split.train.num_users() || items.num_items() != split.train.num_items()) {
    throw DimensionError("evaluate_model: model does not match dataset");
  }
  std::vector<Vector> item_reps(items.num_items());
  for (ItemId t = 0; t < items.num_items(); ++t) {
    item_reps[t] = final_representation(items.embedding(t), scheme);
  }
  return evaluate(
      [&](UserId u, std::span<double> scores) {
        const Vector rep = final_representation(clients[u].embedding, scheme);
        for (ItemId t = 0; t < scores.size(); ++t) scores[t] = score(rep, item_reps[t]);
      },
      split, cutoff, ideal);
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// CSV: user,num_test,recall,ndcg.
inline void write_per_user_table(const EvaluationResult& result,
                                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "user,num_test,recall,ndcg\n";
  for (const auto& m : result.per_user) {
    out << m.user << ',' << m.num_test << ',' << format_double(m.recall) << ','
        << format_double(m.ndcg) << '\n';
  }
}

}  // namespace fedgrec::eval

#endif  // FEDGREC_EVAL_HPP_
