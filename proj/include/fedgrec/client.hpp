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

#ifndef FEDGREC_CLIENT_HPP_
#define FEDGREC_CLIENT_HPP_

// One simulated user: latent refresh, local BPR training with the latent
// layers held fixed, and construction of the degree-normalized update rows
// it contributes to the item latents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedgrec/dataset.hpp"
#include "fedgrec/embedding.hpp"
#include "fedgrec/errors.hpp"
#include "fedgrec/rng.hpp"

namespace fedgrec {

struct AdamMoments {
  Vector first;
  Vector second;
  std::uint64_t step = 0;

  friend bool operator==(const AdamMoments&, const AdamMoments&) = default;
};

struct UserState {
  UserId id = 0;
  LayeredEmbedding embedding;
  // Moments for layer 0; persist across epochs.
  AdamMoments moments;
  // N_u, ascending. Points into the training graph.
  std::span<const ItemId> train_items;
};

inline UserState make_user(UserId id, std::span<const ItemId> train_items,
                           std::size_t depth, std::size_t dim) {
  return UserState{id, LayeredEmbedding(depth, dim),
                   AdamMoments{Vector(dim, 0.0), Vector(dim, 0.0), 0}, train_items};
}

// Snapshot of the layered embeddings of the items a user queried.
class ItemView {
 public:
  ItemView() = default;
  ItemView(std::vector<ItemId> ids, std::vector<LayeredEmbedding> embeddings)
      : ids_(std::move(ids)), embeddings_(std::move(embeddings)) {
    if (ids_.size() != embeddings_.size()) {
      throw DimensionError("item view: ids and embeddings differ in count");
    }
    if (!std::is_sorted(ids_.begin(), ids_.end())) {
      throw ValidationError("item view ids must be ascending");
    }
  }

  std::size_t size() const { return ids_.size(); }
  const std::vector<ItemId>& ids() const { return ids_; }
  const LayeredEmbedding& embedding(std::size_t index) const { return embeddings_[index]; }
  LayeredEmbedding& embedding(std::size_t index) { return embeddings_[index]; }

  std::optional<std::size_t> find(ItemId t) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), t);
    if (it == ids_.end() || *it != t) return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
  }
  std::size_t index_of(ItemId t) const {
    auto i = find(t);
    if (!i) throw ProtocolError("item " + std::to_string(t) + " missing from view");
    return *i;
  }

 private:
  std::vector<ItemId> ids_;
  std::vector<LayeredEmbedding> embeddings_;
};

struct SamplePair {
  ItemId positive = 0;
  ItemId negative = 0;

  friend bool operator==(const SamplePair&, const SamplePair&) = default;
};

struct TrainingBatch {
  std::vector<SamplePair> pairs;
};

struct OptimizerConfig {
  enum class Kind { kPlain, kAdaptive };
  Kind kind = Kind::kAdaptive;
  double rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// N_u plus min(neg_count, N - |N_u|) distinct non-interacted items drawn
// uniformly without replacement. Ascending.
inline std::vector<ItemId> sample_item_set(std::span<const ItemId> positives,
                                           std::size_t num_items,
                                           std::size_t neg_count, Rng& rng) {
  std::vector<ItemId> pool;
  pool.reserve(num_items - positives.size());
  auto pos = positives.begin();
  for (ItemId t = 0; t < num_items; ++t) {
    if (pos != positives.end() && *pos == t) {
      ++pos;
    } else {
      pool.push_back(t);
    }
  }
  const std::size_t take = std::min(neg_count, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  std::vector<ItemId> out(positives.begin(), positives.end());
  out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<ItemId> sample_item_set(const UserState& user, std::size_t num_items,
                                           std::size_t neg_count, Rng& rng) {
  return sample_item_set(user.train_items, num_items, neg_count, rng);
}

// e_u = sum_{t in N_u} layer(t) / sqrt(|N_t| |N_u|), layer(t) a d-vector.
template <typename LayerOf>
Vector propagate_user_layer(std::span<const ItemId> positives,
                            std::span<const std::size_t> item_degrees,
                            std::size_t dim, LayerOf&& layer_of) {
  Vector out(dim, 0.0);
  for (ItemId t : positives) {
    if (t >= item_degrees.size()) throw ProtocolError("item outside degree table");
    const double c = normalization(positives.size(), item_degrees[t]);
    std::span<const double> e = layer_of(t);
    for (std::size_t i = 0; i < dim; ++i) out[i] += c * e[i];
  }
  return out;
}

// Recomputes e_u^1..e_u^K from the snapshot item layers e_t^0..e_t^{K-1}.
// Returns the K new layers; the user state is not modified.
inline std::vector<Vector> refresh_latent_user(const UserState& user, const ItemView& items,
                                               std::span<const std::size_t> item_degrees) {
  const std::size_t depth = user.embedding.depth();
  const std::size_t dim = user.embedding.dim();
  std::vector<Vector> layers;
  layers.reserve(depth);
  for (std::size_t k = 1; k <= depth; ++k) {
    layers.push_back(propagate_user_layer(
        user.train_items, item_degrees, dim, [&](ItemId t) {
          return items.embedding(items.index_of(t)).layer(k - 1);
        }));
  }
  return layers;
}

// Gradients of the local objective. Item gradients are stored densely per
// view index; `touched` lists the view indices that appear in the batch.
struct BprGradients {
  std::size_t dim = 0;
  Vector user;
  Vector items;
  std::vector<std::size_t> touched;

  std::span<const double> item(std::size_t view_index) const {
    return std::span<const double>(items).subspan(view_index * dim, dim);
  }
};

namespace detail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

struct BprEvaluation {
  double loss = 0.0;
  BprGradients grads;
};

inline BprEvaluation evaluate_bpr(const UserState& user, const ItemView& items,
                                  const TrainingBatch& batch,
                                  const AggregationScheme& scheme, double l2,
                                  bool with_gradients) {
  const std::size_t depth = user.embedding.depth();
  const std::size_t dim = user.embedding.dim();
  BprEvaluation out;
  auto& g = out.grads;
  g.dim = dim;
  if (with_gradients) {
    g.user.assign(dim, 0.0);
    g.items.assign(items.size() * dim, 0.0);
  }
  const Vector user_rep = final_representation(user.embedding, scheme);
  Vector user_pull;
  if (with_gradients) user_pull = layer0_pullback(scheme, depth, dim, user_rep);

  std::vector<Vector> reps(items.size());
  std::vector<char> seen(items.size(), 0);
  auto rep_of = [&](std::size_t idx) -> const Vector& {
    if (!seen[idx]) {
      seen[idx] = 1;
      g.touched.push_back(idx);
      reps[idx] = final_representation(items.embedding(idx), scheme);
    }
    return reps[idx];
  };

  for (const auto& pair : batch.pairs) {
    const std::size_t i = items.index_of(pair.positive);
    const std::size_t j = items.index_of(pair.negative);
    const Vector& rep_i = rep_of(i);
    const Vector& rep_j = rep_of(j);
    const double margin = score(user_rep, rep_j) - score(user_rep, rep_i);
    out.loss += softplus(margin);
    if (!with_gradients) continue;
    const double s = sigmoid(margin);
    const Vector pull_i = layer0_pullback(scheme, depth, dim, rep_i);
    const Vector pull_j = layer0_pullback(scheme, depth, dim, rep_j);
    for (std::size_t x = 0; x < dim; ++x) g.user[x] += s * (pull_j[x] - pull_i[x]);
    double* gi = g.items.data() + i * dim;
    double* gj = g.items.data() + j * dim;
    for (std::size_t x = 0; x < dim; ++x) {
      gi[x] += -s * user_pull[x];
      gj[x] += s * user_pull[x];
    }
  }
  std::sort(g.touched.begin(), g.touched.end());

  double reg = squared_norm(user.embedding.layer(0));
  for (std::size_t idx : g.touched) reg += squared_norm(items.embedding(idx).layer(0));
  out.loss += l2 * reg;
  if (with_gradients) {
    auto u0 = user.embedding.layer(0);
    for (std::size_t x = 0; x < dim; ++x) g.user[x] += 2.0 * l2 * u0[x];
    for (std::size_t idx : g.touched) {
      auto t0 = items.embedding(idx).layer(0);
      double* gt = g.items.data() + idx * dim;
      for (std::size_t x = 0; x < dim; ++x) gt[x] += 2.0 * l2 * t0[x];
    }
  }
  return out;
}

}  // namespace detail

// sum_{(i,j) in B} softplus(y_uj - y_ui) + l2 (|e_u^0|^2 + sum_{t in B} |e_t^0|^2)
// with i the positive and j the negative item of each pair.
inline double bpr_loss(const UserState& user, const ItemView& items,
                       const TrainingBatch& batch, const AggregationScheme& scheme,
                       double l2) {
  return detail::evaluate_bpr(user, items, batch, scheme, l2, false).loss;
}

// Gradients w.r.t. e_u^0 and the batch items' e_t^0; latent layers are
// treated as constants.
inline BprGradients bpr_gradients(const UserState& user, const ItemView& items,
                                  const TrainingBatch& batch,
                                  const AggregationScheme& scheme, double l2) {
  return detail::evaluate_bpr(user, items, batch, scheme, l2, true).grads;
}

// One negative per positive, uniform over `negative_pool` with replacement.
inline TrainingBatch draw_batch(std::span<const ItemId> positives,
                                std::span<const ItemId> negative_pool, Rng& rng) {
  TrainingBatch batch;
  if (negative_pool.empty()) return batch;
  std::uniform_int_distribution<std::size_t> pick(0, negative_pool.size() - 1);
  batch.pairs.reserve(positives.size());
  for (ItemId i : positives) batch.pairs.push_back({i, negative_pool[pick(rng)]});
  return batch;
}

struct LocalTrainConfig {
  std::size_t iterations = 10;
  OptimizerConfig optimizer;
  double l2 = 1e-4;
  AggregationScheme scheme;
};

struct LocalUpdate {
  // e~_u^0 - e_u^0.
  Vector user_delta;
  // e~_t^0 - e_t^0 per view index, flattened (|view| x d).
  Vector item_deltas;
  // Objective on the first batch, before any step.
  double initial_loss = 0.0;
};

namespace detail {

struct AdamBias {
  double first = 1.0;
  double second = 1.0;
};

inline AdamBias adam_bias(std::uint64_t step, const OptimizerConfig& opt) {
  return {1.0 - std::pow(opt.beta1, static_cast<double>(step)),
          1.0 - std::pow(opt.beta2, static_cast<double>(step))};
}

inline void adam_update(std::span<double> x, std::span<const double> g,
                        std::span<double> m, std::span<double> v, const AdamBias& bias,
                        const OptimizerConfig& opt) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
    v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bias.first;
    const double v_hat = v[i] / bias.second;
    x[i] -= opt.rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
  }
}

inline void plain_update(std::span<double> x, std::span<const double> g, double rate) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= rate * g[i];
}

}  // namespace detail

// Runs `iterations` local steps on e_u^0 and local copies of the queried
// items' e_t^0. The user's layer 0 and moments are updated in place; latent
// layers are never written. Item optimizer moments live for this call only.
inline LocalUpdate local_train(UserState& user, const ItemView& snapshot,
                               const LocalTrainConfig& config, Rng& rng) {
  if (config.iterations == 0) throw ValidationError("local_train: iterations must be >= 1");
  const std::size_t dim = user.embedding.dim();
  ItemView items = snapshot;
  const Vector user_start(user.embedding.layer(0).begin(), user.embedding.layer(0).end());

  std::vector<ItemId> negatives;
  {
    auto pos = user.train_items.begin();
    for (ItemId t : items.ids()) {
      while (pos != user.train_items.end() && *pos < t) ++pos;
      if (pos == user.train_items.end() || *pos != t) negatives.push_back(t);
    }
  }

  const bool adaptive = config.optimizer.kind == OptimizerConfig::Kind::kAdaptive;
  Vector item_m, item_v;
  if (adaptive) {
    item_m.assign(items.size() * dim, 0.0);
    item_v.assign(items.size() * dim, 0.0);
  }
  std::vector<char> ever_touched(items.size(), 0);
  std::vector<std::size_t> active;

  LocalUpdate out;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const TrainingBatch batch = draw_batch(user.train_items, negatives, rng);
    auto [loss, g] =
        detail::evaluate_bpr(user, items, batch, config.scheme, config.l2, true);
    if (!std::isfinite(loss) || !all_finite(g.user) || !all_finite(g.items)) {
      throw DivergenceError("user " + std::to_string(user.id) +
                            ": non-finite loss or gradient");
    }
    if (it == 1) out.initial_loss = loss;
    for (std::size_t idx : g.touched) {
      if (!ever_touched[idx]) {
        ever_touched[idx] = 1;
        active.push_back(idx);
      }
    }
    if (adaptive) {
      auto& mom = user.moments;
      ++mom.step;
      detail::adam_update(user.embedding.layer(0), g.user, mom.first, mom.second,
                          detail::adam_bias(mom.step, config.optimizer), config.optimizer);
      // Items never touched have zero moments and would not move.
      const auto bias = detail::adam_bias(it, config.optimizer);
      for (std::size_t idx : active) {
        auto m = std::span<double>(item_m).subspan(idx * dim, dim);
        auto v = std::span<double>(item_v).subspan(idx * dim, dim);
        detail::adam_update(items.embedding(idx).layer(0), g.item(idx), m, v, bias,
                            config.optimizer);
      }
    } else {
      detail::plain_update(user.embedding.layer(0), g.user, config.optimizer.rate);
      for (std::size_t idx : g.touched) {
        detail::plain_update(items.embedding(idx).layer(0), g.item(idx),
                             config.optimizer.rate);
      }
    }
  }

  out.user_delta.resize(dim);
  auto u0 = user.embedding.layer(0);
  for (std::size_t x = 0; x < dim; ++x) out.user_delta[x] = u0[x] - user_start[x];
  out.item_deltas.assign(items.size() * dim, 0.0);
  for (std::size_t idx : active) {
    auto now = items.embedding(idx).layer(0);
    auto before = snapshot.embedding(idx).layer(0);
    for (std::size_t x = 0; x < dim; ++x) out.item_deltas[idx * dim + x] = now[x] - before[x];
  }
  if (!all_finite(out.user_delta) || !all_finite(out.item_deltas)) {
    throw DivergenceError("user " + std::to_string(user.id) + ": non-finite update");
  }
  return out;
}

// Rows of Y_u^T D (delta_k)^T: for each t in N_u, norm(u, t) * delta_k.
struct UpdateMatrix {
  std::size_t dim = 0;
  std::vector<ItemId> rows;
  // One flattened |rows| x d block per uploaded layer.
  std::vector<Vector> layers;

  std::span<const double> row(std::size_t layer, std::size_t r) const {
    return std::span<const double>(layers[layer]).subspan(r * dim, dim);
  }

  // Adds layer `k` into a dense N x d buffer (rows outside N_u stay zero).
  void scatter(std::size_t k, std::span<double> dense) const {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = row(k, r);
      double* dst = dense.data() + static_cast<std::size_t>(rows[r]) * dim;
      for (std::size_t x = 0; x < dim; ++x) dst[x] += src[x];
    }
  }
};

inline UpdateMatrix build_update_matrix(const UserState& user,
                                        std::span<const std::size_t> item_degrees,
                                        std::span<const Vector> deltas) {
  const std::size_t dim = user.embedding.dim();
  UpdateMatrix out;
  out.dim = dim;
  out.rows.assign(user.train_items.begin(), user.train_items.end());
  for (const Vector& delta : deltas) {
    if (delta.size() != dim) throw DimensionError("update matrix: delta length");
    Vector block(out.rows.size() * dim);
    for (std::size_t r = 0; r < out.rows.size(); ++r) {
      const ItemId t = out.rows[r];
      if (t >= item_degrees.size()) throw ProtocolError("item outside degree table");
      const double c = normalization(out.rows.size(), item_degrees[t]);
      for (std::size_t x = 0; x < dim; ++x) block[r * dim + x] = c * delta[x];
    }
    out.layers.push_back(std::move(block));
  }
  return out;
}

}  // namespace fedgrec

#endif  // FEDGREC_CLIENT_HPP_
