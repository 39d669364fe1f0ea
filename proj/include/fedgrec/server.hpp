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

#ifndef FEDGREC_SERVER_HPP_
#define FEDGREC_SERVER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedgrec/client.hpp"
#include "fedgrec/embedding.hpp"
#include "fedgrec/errors.hpp"
#include "fedgrec/parallel.hpp"
#include "fedgrec/rng.hpp"
#include "fedgrec/secagg.hpp"

namespace fedgrec {

// Round-key phases; the key of a secure-aggregation round is derived from
// (master seed, phase, index).
enum class RoundPhase : std::uint64_t {
  kDegrees = 1,
  kWarmup = 2,
  kTraining = 3,
};

inline secagg::RoundKey round_key(std::uint64_t master_seed, RoundPhase phase,
                                  std::uint64_t index) {
  return secagg::derive_round_key(master_seed, static_cast<std::uint64_t>(phase), index);
}

// Server-side item embeddings: layer 0 (learnable) and latent layers 1..K,
// each an N x d row-major matrix, stored layer after layer.
class ItemStore {
 public:
  ItemStore() = default;
  ItemStore(std::size_t num_items, std::size_t depth, std::size_t dim,
            std::vector<std::size_t> degrees)
      : num_items_(num_items),
        depth_(depth),
        dim_(dim),
        values_((depth + 1) * num_items * dim, 0.0),
        degrees_(std::move(degrees)) {
    if (degrees_.size() != num_items_) throw DimensionError("item store: degree table size");
  }

  std::size_t num_items() const { return num_items_; }
  std::size_t depth() const { return depth_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::size_t>& degrees() const { return degrees_; }

  std::span<double> layer(std::size_t k) {
    return std::span<double>(values_).subspan(k * num_items_ * dim_, num_items_ * dim_);
  }
  std::span<const double> layer(std::size_t k) const {
    return std::span<const double>(values_).subspan(k * num_items_ * dim_, num_items_ * dim_);
  }
  std::span<const double> row(std::size_t k, ItemId t) const {
    return layer(k).subspan(static_cast<std::size_t>(t) * dim_, dim_);
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  LayeredEmbedding embedding(ItemId t) const {
    LayeredEmbedding e(depth_, dim_);
    for (std::size_t k = 0; k <= depth_; ++k) {
      auto src = row(k, t);
      std::copy(src.begin(), src.end(), e.layer(k).begin());
    }
    return e;
  }

  // Immutable copy of the requested items' layers.
  ItemView snapshot(std::vector<ItemId> ids) const {
    std::vector<LayeredEmbedding> embeddings;
    embeddings.reserve(ids.size());
    for (ItemId t : ids) {
      if (t >= num_items_) throw ProtocolError("query for unknown item " + std::to_string(t));
      embeddings.push_back(embedding(t));
    }
    return ItemView(std::move(ids), std::move(embeddings));
  }

  friend bool operator==(const ItemStore&, const ItemStore&) = default;

 private:
  std::size_t num_items_ = 0;
  std::size_t depth_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::vector<std::size_t> degrees_;
};

namespace detail {

inline std::vector<secagg::ParticipantId> participant_ids(std::span<const UserState> clients) {
  std::vector<secagg::ParticipantId> ids;
  ids.reserve(clients.size());
  for (const auto& c : clients) ids.push_back(c.id);
  return ids;
}

inline void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw DivergenceError(std::string(what) + ": non-finite aggregate");
}

}  // namespace detail

// |N_t| = SecAgg(Y_u)_t: every client uploads its binary adjacency row.
inline std::vector<std::size_t> compute_item_degrees(std::span<const UserState> clients,
                                                     std::size_t num_items,
                                                     const secagg::RoundKey& key,
                                                     unsigned frac_bits = secagg::kDefaultFracBits) {
  std::vector<Vector> rows(clients.size(), Vector(num_items, 0.0));
  for (std::size_t c = 0; c < clients.size(); ++c) {
    for (ItemId t : clients[c].train_items) {
      if (t >= num_items) throw ProtocolError("client row outside item universe");
      rows[c][t] = 1.0;
    }
  }
  const auto ids = detail::participant_ids(clients);
  const auto sum = secagg::secure_sum(rows, ids, key, frac_bits);
  std::vector<std::size_t> degrees(num_items);
  for (std::size_t t = 0; t < num_items; ++t) {
    degrees[t] = static_cast<std::size_t>(std::llround(sum[t]));
  }
  return degrees;
}

struct WarmupConfig {
  std::size_t depth = 2;
  std::size_t dim = 64;
  double init_scale = 0.1;
  std::uint64_t master_seed = 0;
  unsigned frac_bits = secagg::kDefaultFracBits;
};

// Builds one client per user of the graph with zeroed embeddings.
inline std::vector<UserState> make_clients(const InteractionGraph& graph, std::size_t depth,
                                           std::size_t dim) {
  std::vector<UserState> clients;
  clients.reserve(graph.num_users());
  for (UserId u = 0; u < graph.num_users(); ++u) {
    clients.push_back(make_user(u, graph.items_of(u), depth, dim));
  }
  return clients;
}

// Degree query, N(0, sigma) initialization of every layer 0, then K rounds in
// which each client computes e_u^k from E^{k-1} and the server sets
// E^k = SecAgg(Y_u^T D e_u^{k-1}). Requires every client 0..M-1.
inline ItemStore warmup(std::vector<UserState>& clients, std::size_t num_users,
                        std::size_t num_items, const WarmupConfig& cfg) {
  if (clients.size() != num_users) {
    throw ProtocolError("warm-up requires all " + std::to_string(num_users) + " clients, got " +
                        std::to_string(clients.size()));
  }
  for (std::size_t u = 0; u < clients.size(); ++u) {
    if (clients[u].id != u) throw ProtocolError("warm-up: client " + std::to_string(u) + " missing");
    if (clients[u].embedding.depth() != cfg.depth || clients[u].embedding.dim() != cfg.dim) {
      throw DimensionError("warm-up: client embedding shape");
    }
  }
  if (!(cfg.init_scale >= 0.0)) throw ValidationError("init scale must be >= 0");

  auto degrees = compute_item_degrees(clients, num_items,
                                      round_key(cfg.master_seed, RoundPhase::kDegrees, 0),
                                      cfg.frac_bits);
  ItemStore store(num_items, cfg.depth, cfg.dim, std::move(degrees));

  Rng rng = make_stream(cfg.master_seed, Stream::kInit);
  auto draw = [&](std::span<double> out) {
    if (cfg.init_scale == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    std::normal_distribution<double> normal(0.0, cfg.init_scale);
    for (double& x : out) x = normal(rng);
  };
  draw(store.layer(0));
  for (auto& c : clients) {
    for (std::size_t k = 0; k <= cfg.depth; ++k) {
      auto l = c.embedding.layer(k);
      std::fill(l.begin(), l.end(), 0.0);
    }
    draw(c.embedding.layer(0));
    c.moments = AdamMoments{Vector(cfg.dim, 0.0), Vector(cfg.dim, 0.0), 0};
  }

  const auto ids = detail::participant_ids(clients);
  const std::size_t n_d = num_items * cfg.dim;
  for (std::size_t k = 1; k <= cfg.depth; ++k) {
    const auto prev = store.layer(k - 1);
    std::vector<Vector> uploads(clients.size());
    parallel_for(clients.size(), [&](std::size_t c) {
      auto& client = clients[c];
      const Vector source(client.embedding.layer(k - 1).begin(),
                          client.embedding.layer(k - 1).end());
      const Vector next = propagate_user_layer(
          client.train_items, store.degrees(), cfg.dim,
          [&](ItemId t) { return prev.subspan(static_cast<std::size_t>(t) * cfg.dim, cfg.dim); });
      std::copy(next.begin(), next.end(), client.embedding.layer(k).begin());
      const auto update = build_update_matrix(client, store.degrees(), std::span(&source, 1));
      uploads[c].assign(n_d, 0.0);
      update.scatter(0, uploads[c]);
    });
    const auto sum = secagg::secure_sum(uploads, ids,
                                        round_key(cfg.master_seed, RoundPhase::kWarmup, k),
                                        cfg.frac_bits);
    detail::require_finite(sum.values(), "warm-up");
    std::copy(sum.values().begin(), sum.values().end(), store.layer(k).begin());
  }
  return store;
}

// S users uniformly without replacement, ascending.
inline std::vector<UserId> sample_users(std::size_t num_users, std::size_t count, Rng& rng) {
  if (count < 1 || count > num_users) {
    throw ValidationError("sample_users: need 1 <= S <= M (S=" + std::to_string(count) +
                          ", M=" + std::to_string(num_users) + ")");
  }
  std::vector<UserId> all(num_users);
  std::iota(all.begin(), all.end(), UserId{0});
  std::vector<UserId> out;
  out.reserve(count);
  std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng);
  return out;
}

// e_t^0 += alpha * SecAgg(e~_t^0 - e_t^0).
inline void apply_item_updates(ItemStore& store, const secagg::Aggregate& delta, double alpha) {
  auto layer0 = store.layer(0);
  if (delta.size() != layer0.size()) throw DimensionError("item update: aggregate size");
  detail::require_finite(delta.values(), "item update");
  for (std::size_t i = 0; i < layer0.size(); ++i) layer0[i] += alpha * delta[i];
  detail::require_finite(layer0, "item update");
}

// E^{k+1} += alpha * SecAgg(Y_u^T D (e~_u^k - e_u^k)^T) for k = 0..K-1.
// `deltas` holds the K aggregated N x d blocks in order of k.
inline void apply_latent_item_updates(ItemStore& store, const secagg::Aggregate& deltas,
                                      double alpha) {
  const std::size_t n_d = store.num_items() * store.dim();
  if (deltas.size() != store.depth() * n_d) throw DimensionError("latent update: aggregate size");
  detail::require_finite(deltas.values(), "latent update");
  for (std::size_t k = 0; k < store.depth(); ++k) {
    auto target = store.layer(k + 1);
    for (std::size_t i = 0; i < n_d; ++i) target[i] += alpha * deltas[k * n_d + i];
    detail::require_finite(target, "latent update");
  }
}

}  // namespace fedgrec

#endif  // FEDGREC_SERVER_HPP_
