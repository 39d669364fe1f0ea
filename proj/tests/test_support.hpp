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

#ifndef FEDGREC_TESTS_TEST_SUPPORT_HPP_
#define FEDGREC_TESTS_TEST_SUPPORT_HPP_

// Fixtures and independent oracles shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fedgrec/fedgrec.hpp"

namespace fedgrec::testing {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("fedgrec_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// u0 - {t0, t1}, u1 - {t1, t2}.
inline InteractionGraph g1_graph() { return InteractionGraph(3, {{0, 1}, {1, 2}}); }

// Random bipartite graph where every user has >= 1 item.
inline InteractionGraph random_graph(std::size_t users, std::size_t items, double density,
                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<ItemId> any(0, static_cast<ItemId>(items - 1));
  std::vector<std::vector<ItemId>> rows(users);
  for (auto& row : rows) {
    for (ItemId t = 0; t < items; ++t) {
      if (unit(rng) < density) row.push_back(t);
    }
    if (row.empty()) row.push_back(any(rng));
  }
  return InteractionGraph(items, std::move(rows));
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

inline LayeredEmbedding random_layers(std::size_t depth, std::size_t dim, std::mt19937_64& rng,
                                      double scale = 1.0) {
  LayeredEmbedding e(depth, dim);
  auto v = random_vector((depth + 1) * dim, rng, scale);
  std::copy(v.begin(), v.end(), e.values().begin());
  return e;
}

// Central difference of f at x[i].
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

struct GradientCheck {
  double worst = 0.0;
  std::size_t entries = 0;
  std::string label;
};

// One random configuration: analytic BPR gradients against central finite
// differences of bpr_loss over every layer-0 entry of the user and of every
// item in the view.
inline GradientCheck check_random_gradient(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim_d(1, 8), depth_d(0, 3), items_d(4, 14);
  const std::size_t dim = dim_d(rng), depth = depth_d(rng), n = items_d(rng);
  AggregationScheme scheme;
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0: scheme = AggregationScheme::uniform(depth); break;
    case 1: {
      Vector w = random_vector(depth + 1, rng);
      scheme = AggregationScheme::weighted_mean(w);
      break;
    }
    case 2: scheme = AggregationScheme::last_pair(); break;
    default: scheme = AggregationScheme::concat(); break;
  }
  std::vector<ItemId> all(n);
  std::iota(all.begin(), all.end(), ItemId{0});
  std::shuffle(all.begin(), all.end(), rng);
  const std::size_t npos = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
  std::vector<ItemId> positives(all.begin(), all.begin() + static_cast<long>(npos));
  std::vector<ItemId> negatives(all.begin() + static_cast<long>(npos), all.end());
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end());

  UserState user = make_user(0, positives, depth, dim);
  user.embedding = random_layers(depth, dim, rng, 0.7);
  std::vector<ItemId> ids(n);
  std::iota(ids.begin(), ids.end(), ItemId{0});
  std::vector<LayeredEmbedding> embeddings;
  for (std::size_t t = 0; t < n; ++t) embeddings.push_back(random_layers(depth, dim, rng, 0.7));
  ItemView view(ids, std::move(embeddings));
  const TrainingBatch batch = draw_batch(positives, negatives, rng);
  const double l2 = std::uniform_real_distribution<double>(0.0, 0.1)(rng);

  const BprGradients g = bpr_gradients(user, view, batch, scheme, l2);
  auto loss = [&] { return bpr_loss(user, view, batch, scheme, l2); };
  GradientCheck out;
  out.label = std::string(to_string(scheme.kind())) + " d=" + std::to_string(dim) +
              " K=" + std::to_string(depth);
  auto record = [&](double analytic, double numeric) {
    out.worst = std::max(out.worst, relative_error(analytic, numeric));
    ++out.entries;
  };
  constexpr double kStep = 1e-6;
  for (std::size_t x = 0; x < dim; ++x) {
    record(g.user[x], central_difference(loss, user.embedding.layer(0)[x], kStep));
  }
  for (std::size_t idx = 0; idx < n; ++idx) {
    for (std::size_t x = 0; x < dim; ++x) {
      record(g.items[idx * dim + x],
             central_difference(loss, view.embedding(idx).layer(0)[x], kStep));
    }
  }
  return out;
}

struct RandomRankingCheck {
  double observed = 0.0;
  double expected = 0.0;
  double standard_error = 0.0;
};

// Mean Recall@cutoff of uniformly random scores against the hypergeometric
// expectation: with C candidates (items not in train), m held-out items and
// `cutoff` draws, hits ~ Hypergeometric(C, m, cutoff).
inline RandomRankingCheck random_ranking_recall(std::size_t users, std::size_t items,
                                                std::size_t cutoff, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> train_n(1, 10), test_n(1, 15);
  std::vector<std::vector<ItemId>> train(users), test(users);
  std::vector<ItemId> all(items);
  std::iota(all.begin(), all.end(), ItemId{0});
  for (std::size_t u = 0; u < users; ++u) {
    std::shuffle(all.begin(), all.end(), rng);
    const std::size_t a = train_n(rng), b = test_n(rng);
    train[u].assign(all.begin(), all.begin() + static_cast<long>(a));
    test[u].assign(all.begin() + static_cast<long>(a), all.begin() + static_cast<long>(a + b));
    std::sort(train[u].begin(), train[u].end());
    std::sort(test[u].begin(), test[u].end());
  }
  const DatasetSplit split{InteractionGraph(items, train), test};

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::mt19937_64> user_rngs;
  for (std::size_t u = 0; u < users; ++u) user_rngs.emplace_back(seed * 7919 + u);
  const auto result = eval::evaluate(
      [&](UserId u, std::span<double> scores) {
        for (double& x : scores) x = unit(user_rngs[u]);
      },
      split, cutoff);

  RandomRankingCheck out;
  out.observed = result.mean_recall;
  double variance = 0.0;
  for (std::size_t u = 0; u < users; ++u) {
    const double c = static_cast<double>(items - train[u].size());
    const double m = static_cast<double>(test[u].size());
    const double n = std::min(static_cast<double>(cutoff), c);
    out.expected += n / c;
    const double var_hits = n * (m / c) * (1.0 - m / c) * (c - n) / (c - 1.0);
    variance += var_hits / (m * m);
  }
  out.expected /= static_cast<double>(users);
  out.standard_error = std::sqrt(variance) / static_cast<double>(users);
  return out;
}

// Federated BPR matrix factorization written directly against plain arrays:
// no layers, no latent traffic, no masking. Shares the random streams and the
// fixed-point aggregation arithmetic with the library so trajectories can be
// compared bit for bit.
class FederatedBprMf {
 public:
  FederatedBprMf(const InteractionGraph& graph, const ExperimentConfig& cfg)
      : graph_(graph), cfg_(cfg), m_(graph.num_users()), n_(graph.num_items()), d_(cfg.dim) {
    users_.assign(m_ * d_, 0.0);
    items_.assign(n_ * d_, 0.0);
    user_m_.assign(m_ * d_, 0.0);
    user_v_.assign(m_ * d_, 0.0);
    user_step_.assign(m_, 0);
    Rng rng = make_stream(cfg.master_seed, Stream::kInit);
    if (cfg.init_scale > 0.0) {
      // One distribution per drawn block, as the library does.
      std::normal_distribution<double> normal(0.0, cfg.init_scale);
      for (double& x : items_) x = normal(rng);
      for (std::size_t u = 0; u < m_; ++u) {
        std::normal_distribution<double> per_user(0.0, cfg.init_scale);
        for (std::size_t x = 0; x < d_; ++x) users_[u * d_ + x] = per_user(rng);
      }
    }
  }

  // Returns the mean pre-update loss of the epoch.
  double run_epoch() {
    Rng user_rng = make_stream(cfg_.master_seed, Stream::kUserSampling, epoch_);
    std::vector<UserId> all(m_), chosen;
    std::iota(all.begin(), all.end(), UserId{0});
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), cfg_.users_per_epoch,
                user_rng);

    std::vector<std::uint64_t> total(n_ * d_, 0);
    double loss_sum = 0.0;
    for (UserId u : chosen) {
      const auto pos = graph_.items_of(u);
      // Query: positives plus distinct negatives (partial Fisher-Yates).
      Rng q = make_stream(cfg_.master_seed, Stream::kItemQuery, epoch_, u);
      std::vector<ItemId> pool;
      for (ItemId t = 0; t < n_; ++t) {
        if (!std::binary_search(pos.begin(), pos.end(), t)) pool.push_back(t);
      }
      const std::size_t take = std::min(cfg_.neg_count, pool.size());
      for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(q)]);
      }
      std::vector<ItemId> negatives(pool.begin(), pool.begin() + static_cast<long>(take));
      std::sort(negatives.begin(), negatives.end());

      std::vector<double> local = items_;
      std::vector<double> im(n_ * d_, 0.0), iv(n_ * d_, 0.0);
      std::vector<char> active(n_, 0);
      double* eu = users_.data() + u * d_;
      Rng b = make_stream(cfg_.master_seed, Stream::kBatchOrder, epoch_, u);
      for (std::size_t it = 1; it <= cfg_.local_iterations; ++it) {
        std::vector<std::pair<ItemId, ItemId>> batch;
        if (!negatives.empty()) {
          std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
          for (ItemId i : pos) batch.emplace_back(i, negatives[pick(b)]);
        }
        std::vector<double> gu(d_, 0.0), gi_all(n_ * d_, 0.0);
        std::vector<ItemId> touched;
        double loss = 0.0;
        for (auto [i, j] : batch) {
          const double* ei = local.data() + i * d_;
          const double* ej = local.data() + j * d_;
          double si = 0.0, sj = 0.0;
          for (std::size_t x = 0; x < d_; ++x) sj += eu[x] * ej[x];
          for (std::size_t x = 0; x < d_; ++x) si += eu[x] * ei[x];
          const double margin = sj - si;
          loss += margin > 0.0 ? margin + std::log1p(std::exp(-margin))
                               : std::log1p(std::exp(margin));
          const double s = margin >= 0.0 ? 1.0 / (1.0 + std::exp(-margin))
                                         : std::exp(margin) / (1.0 + std::exp(margin));
          for (std::size_t x = 0; x < d_; ++x) gu[x] += s * (ej[x] - ei[x]);
          for (std::size_t x = 0; x < d_; ++x) {
            gi_all[i * d_ + x] += -s * eu[x];
            gi_all[j * d_ + x] += s * eu[x];
          }
          touched.push_back(i);
          touched.push_back(j);
        }
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        double reg = 0.0;
        for (std::size_t x = 0; x < d_; ++x) reg += eu[x] * eu[x];
        for (ItemId t : touched) {
          double sq = 0.0;
          for (std::size_t x = 0; x < d_; ++x) sq += local[t * d_ + x] * local[t * d_ + x];
          reg += sq;
        }
        loss += cfg_.l2 * reg;
        for (std::size_t x = 0; x < d_; ++x) gu[x] += 2.0 * cfg_.l2 * eu[x];
        for (ItemId t : touched) {
          for (std::size_t x = 0; x < d_; ++x) gi_all[t * d_ + x] += 2.0 * cfg_.l2 * local[t * d_ + x];
          active[t] = 1;
        }
        if (it == 1) loss_sum += loss;

        const auto& opt = cfg_;
        if (opt.optimizer == OptimizerConfig::Kind::kAdaptive) {
          const std::uint64_t step = ++user_step_[u];
          adam(eu, gu.data(), user_m_.data() + u * d_, user_v_.data() + u * d_, step);
          for (ItemId t = 0; t < n_; ++t) {
            if (!active[t]) continue;
            adam(local.data() + t * d_, gi_all.data() + t * d_, im.data() + t * d_,
                 iv.data() + t * d_, it);
          }
        } else {
          for (std::size_t x = 0; x < d_; ++x) eu[x] -= cfg_.local_rate * gu[x];
          for (ItemId t : touched) {
            for (std::size_t x = 0; x < d_; ++x) {
              local[t * d_ + x] -= cfg_.local_rate * gi_all[t * d_ + x];
            }
          }
        }
      }
      std::vector<double> upload(n_ * d_);
      for (std::size_t i = 0; i < upload.size(); ++i) upload[i] = local[i] - items_[i];
      const auto words = secagg::encode(upload, cfg_.frac_bits).words;
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += words[i];
    }
    const auto sum = secagg::decode(secagg::FixedPointVector{total, cfg_.frac_bits});
    const double alpha = cfg_.resolved_server_rate();
    for (std::size_t i = 0; i < items_.size(); ++i) items_[i] += alpha * sum[i];
    ++epoch_;
    return loss_sum / static_cast<double>(chosen.size());
  }

  Checkpoint checkpoint() const {
    Checkpoint c;
    c.dim = static_cast<std::uint32_t>(d_);
    c.depth = 0;
    c.num_users = m_;
    c.num_items = n_;
    c.epoch = epoch_;
    c.scheme = AggregationScheme::weighted_mean({1.0});
    c.item_layers = items_;
    c.user_layers = users_;
    c.adam_steps = user_step_;
    c.adam_first = user_m_;
    c.adam_second = user_v_;
    return c;
  }

 private:
  void adam(double* x, const double* g, double* m, double* v, std::uint64_t step) const {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < d_; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= cfg_.local_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }

  const InteractionGraph& graph_;
  ExperimentConfig cfg_;
  std::size_t m_, n_, d_;
  std::size_t epoch_ = 0;
  std::vector<double> users_, items_;
  std::vector<double> user_m_, user_v_;
  std::vector<std::uint64_t> user_step_;
};

}  // namespace fedgrec::testing

#endif  // FEDGREC_TESTS_TEST_SUPPORT_HPP_
