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

#ifndef FEDGREC_PROTOCOL_HPP_
#define FEDGREC_PROTOCOL_HPP_

// The full federated loop: warm-up, then synchronous epochs of
//   1. sample S users; each queries the layered embeddings of N_u plus
//      sampled negatives,
//   2. each refreshes its latent layers from the snapshot,
//   3. each trains layer 0 locally with the latents fixed,
//   4. the padded item deltas and latent update matrices are securely summed
//      and applied by the server.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fedgrec/checkpoint.hpp"
#include "fedgrec/client.hpp"
#include "fedgrec/dataset.hpp"
#include "fedgrec/embedding.hpp"
#include "fedgrec/errors.hpp"
#include "fedgrec/eval.hpp"
#include "fedgrec/parallel.hpp"
#include "fedgrec/rng.hpp"
#include "fedgrec/secagg.hpp"
#include "fedgrec/server.hpp"

namespace fedgrec {

struct ExperimentConfig {
  std::size_t epochs = 2000;          // T
  std::size_t users_per_epoch = 50;   // S
  std::size_t local_iterations = 10;  // tau
  std::size_t latent_depth = 2;       // K
  std::size_t dim = 16;               // d
  double local_rate = 1e-3;           // beta
  std::optional<double> server_rate;  // alpha; 1/S when unset
  double l2 = 1e-4;                   // lambda
  double init_scale = 0.1;            // sigma
  std::size_t neg_count = 2048;
  std::string scheme = "weighted_mean";
  Vector scheme_weights;  // empty: 1/(K+1) each
  OptimizerConfig::Kind optimizer = OptimizerConfig::Kind::kAdaptive;
  std::size_t eval_every = 200;
  std::size_t eval_cutoff = eval::kDefaultCutoff;
  std::uint64_t master_seed = 1;
  unsigned frac_bits = secagg::kDefaultFracBits;

  double resolved_server_rate() const {
    return server_rate.value_or(1.0 / static_cast<double>(users_per_epoch));
  }
  AggregationScheme aggregation() const {
    return parse_scheme(scheme, latent_depth, scheme_weights);
  }
  LocalTrainConfig local_config() const {
    LocalTrainConfig c;
    c.iterations = local_iterations;
    c.optimizer.kind = optimizer;
    c.optimizer.rate = local_rate;
    c.l2 = l2;
    c.scheme = aggregation();
    return c;
  }
};

// local_rate may be 0 (a no-learning run); every other rate must be positive.
inline void validate(const ExperimentConfig& c, std::size_t num_users) {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (c.users_per_epoch < 1 || c.users_per_epoch > num_users) fail("need 1 <= users_per_epoch <= M");
  if (c.local_iterations < 1) fail("local_iterations must be >= 1");
  if (c.dim < 1) fail("dim must be >= 1");
  if (!(c.local_rate >= 0.0) || !std::isfinite(c.local_rate)) fail("local_rate must be >= 0");
  if (c.server_rate && !(*c.server_rate > 0.0 && std::isfinite(*c.server_rate))) {
    fail("server_rate must be > 0");
  }
  if (!(c.l2 >= 0.0) || !std::isfinite(c.l2)) fail("l2 must be >= 0");
  if (!(c.init_scale >= 0.0) || !std::isfinite(c.init_scale)) fail("init_scale must be >= 0");
  if (c.eval_every < 1) fail("eval_every must be >= 1");
  if (c.eval_cutoff < 1) fail("eval_cutoff must be >= 1");
  if (c.frac_bits < 1 || c.frac_bits > 62) fail("frac_bits must be in [1, 62]");
  c.aggregation().check_compatible(c.latent_depth);
}

struct FederationState {
  std::vector<UserState> clients;
  ItemStore items;
  // Training epochs completed.
  std::size_t epoch = 0;
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based index of the completed epoch
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t bytes = 0;
  std::optional<eval::EvaluationResult> metrics;
};

// Download of the queried layered embeddings plus the padded upload.
inline std::uint64_t client_traffic_bytes(std::size_t view_size, std::size_t num_items,
                                          std::size_t depth, std::size_t dim) {
  const std::uint64_t layers = depth + 1;
  return sizeof(double) * layers * dim * (view_size + num_items);
}

inline FederationState initialize(const InteractionGraph& graph, const ExperimentConfig& config) {
  validate(config, graph.num_users());
  FederationState s;
  s.clients = make_clients(graph, config.latent_depth, config.dim);
  s.items = warmup(s.clients, graph.num_users(), graph.num_items(),
                   WarmupConfig{config.latent_depth, config.dim, config.init_scale,
                                config.master_seed, config.frac_bits});
  return s;
}

inline EpochReport run_epoch(FederationState& state, const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t epoch = state.epoch;
  const std::size_t num_items = state.items.num_items();
  const std::size_t depth = config.latent_depth;
  const std::size_t dim = config.dim;
  const std::size_t n_d = num_items * dim;
  const auto local = config.local_config();
  const auto& degrees = state.items.degrees();

  Rng user_rng = make_stream(config.master_seed, Stream::kUserSampling, epoch);
  const auto users = sample_users(state.clients.size(), config.users_per_epoch, user_rng);

  std::vector<Vector> uploads(users.size());
  std::vector<double> losses(users.size());
  std::vector<std::uint64_t> traffic(users.size());
  try {
    parallel_for(users.size(), [&](std::size_t i) {
      const UserId u = users[i];
      UserState& client = state.clients[u];
      Rng query_rng = make_stream(config.master_seed, Stream::kItemQuery, epoch, u);
      const ItemView view =
          state.items.snapshot(sample_item_set(client, num_items, config.neg_count, query_rng));

      // Step 2: refresh e_u^1..K; keep the deltas for layers 1..K-1.
      const auto refreshed = refresh_latent_user(client, view, degrees);
      std::vector<Vector> deltas(depth);
      for (std::size_t k = 1; k <= depth; ++k) {
        auto old = client.embedding.layer(k);
        if (k < depth) {
          deltas[k].resize(dim);
          for (std::size_t x = 0; x < dim; ++x) deltas[k][x] = refreshed[k - 1][x] - old[x];
        }
        std::copy(refreshed[k - 1].begin(), refreshed[k - 1].end(), old.begin());
      }

      // Step 3.
      Rng batch_rng = make_stream(config.master_seed, Stream::kBatchOrder, epoch, u);
      const LocalUpdate update = local_train(client, view, local, batch_rng);
      losses[i] = update.initial_loss;

      // Step 4: [item deltas | Y_u^T D delta_0 | ... | Y_u^T D delta_{K-1}].
      Vector& upload = uploads[i];
      upload.assign((depth + 1) * n_d, 0.0);
      for (std::size_t v = 0; v < view.size(); ++v) {
        double* dst = upload.data() + static_cast<std::size_t>(view.ids()[v]) * dim;
        for (std::size_t x = 0; x < dim; ++x) dst[x] = update.item_deltas[v * dim + x];
      }
      if (depth > 0) {
        deltas[0] = update.user_delta;
        const auto matrix = build_update_matrix(client, degrees, deltas);
        for (std::size_t k = 0; k < depth; ++k) {
          matrix.scatter(k, std::span<double>(upload).subspan((k + 1) * n_d, n_d));
        }
      }
      traffic[i] = client_traffic_bytes(view.size(), num_items, depth, dim);
    });
  } catch (const DivergenceError& e) {
    throw DivergenceError(e.what(), epoch + 1);
  }

  std::vector<secagg::ParticipantId> ids(users.begin(), users.end());
  const auto sum = secagg::secure_sum(
      uploads, ids, round_key(config.master_seed, RoundPhase::kTraining, epoch), config.frac_bits);
  const double alpha = config.resolved_server_rate();
  try {
    apply_item_updates(state.items, sum.slice(0, n_d), alpha);
    if (depth > 0) apply_latent_item_updates(state.items, sum.slice(n_d, depth * n_d), alpha);
  } catch (const DivergenceError& e) {
    throw DivergenceError(e.what(), epoch + 1);
  }
  state.epoch = epoch + 1;

  EpochReport report;
  report.epoch = state.epoch;
  for (double l : losses) report.mean_loss += l;
  report.mean_loss /= static_cast<double>(losses.size());
  if (!std::isfinite(report.mean_loss)) throw DivergenceError("non-finite epoch loss", state.epoch);
  for (auto b : traffic) report.bytes += b;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline Checkpoint to_checkpoint(const FederationState& state, const ExperimentConfig& config) {
  Checkpoint c;
  c.dim = static_cast<std::uint32_t>(state.items.dim());
  c.depth = static_cast<std::uint32_t>(state.items.depth());
  c.num_users = state.clients.size();
  c.num_items = state.items.num_items();
  c.epoch = state.epoch;
  c.scheme = config.aggregation();
  c.item_layers.assign(state.items.values().begin(), state.items.values().end());
  const std::size_t m = state.clients.size(), d = c.dim;
  c.user_layers.resize((std::size_t{c.depth} + 1) * m * d);
  for (std::size_t u = 0; u < m; ++u) {
    const auto& e = state.clients[u].embedding;
    for (std::size_t k = 0; k <= c.depth; ++k) {
      std::copy(e.layer(k).begin(), e.layer(k).end(), c.user_layers.begin() +
                static_cast<std::ptrdiff_t>((k * m + u) * d));
    }
    const auto& mom = state.clients[u].moments;
    c.adam_steps.push_back(mom.step);
    c.adam_first.insert(c.adam_first.end(), mom.first.begin(), mom.first.end());
    c.adam_second.insert(c.adam_second.end(), mom.second.begin(), mom.second.end());
  }
  return c;
}

// Rebuilds the federation from a checkpoint of a run on `graph`. Item
// degrees are re-queried through secure aggregation.
inline FederationState from_checkpoint(const Checkpoint& c, const InteractionGraph& graph,
                                       std::uint64_t master_seed,
                                       unsigned frac_bits = secagg::kDefaultFracBits) {
  if (c.num_users != graph.num_users() || c.num_items != graph.num_items()) {
    throw DimensionError("checkpoint is for " + std::to_string(c.num_users) + " users x " +
                         std::to_string(c.num_items) + " items, dataset has " +
                         std::to_string(graph.num_users()) + " x " +
                         std::to_string(graph.num_items()));
  }
  const std::size_t m = c.num_users, d = c.dim, depth = c.depth;
  FederationState s;
  s.clients = make_clients(graph, depth, d);
  for (std::size_t u = 0; u < m; ++u) {
    auto& client = s.clients[u];
    for (std::size_t k = 0; k <= depth; ++k) {
      auto src = std::span<const double>(c.user_layers).subspan((k * m + u) * d, d);
      std::copy(src.begin(), src.end(), client.embedding.layer(k).begin());
    }
    client.moments.step = c.adam_steps[u];
    std::copy_n(c.adam_first.begin() + static_cast<std::ptrdiff_t>(u * d), d,
                client.moments.first.begin());
    std::copy_n(c.adam_second.begin() + static_cast<std::ptrdiff_t>(u * d), d,
                client.moments.second.begin());
  }
  auto degrees = compute_item_degrees(s.clients, graph.num_items(),
                                      round_key(master_seed, RoundPhase::kDegrees, 0), frac_bits);
  s.items = ItemStore(graph.num_items(), depth, d, std::move(degrees));
  std::copy(c.item_layers.begin(), c.item_layers.end(), s.items.values().begin());
  s.epoch = c.epoch;
  return s;
}

// One line of the metrics trace. Epoch 0 is the post-warm-up evaluation.
struct TraceRecord {
  std::size_t epoch = 0;
  std::optional<double> loss;
  std::optional<double> recall;
  std::optional<double> ndcg;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

inline constexpr const char* kTraceHeader = "epoch,loss,recall,ndcg";

inline std::string format_trace_record(const TraceRecord& r) {
  auto field = [](const std::optional<double>& v) {
    return v ? eval::format_double(*v) : std::string();
  };
  return std::to_string(r.epoch) + ',' + field(r.loss) + ',' + field(r.recall) + ',' +
         field(r.ndcg);
}

struct ExperimentResult {
  std::vector<TraceRecord> trace;
  std::vector<EpochReport> reports;
  std::optional<eval::EvaluationResult> last_eval;
  FederationState state;
};

struct RunHooks {
  // Called as each trace record is produced.
  std::function<void(const TraceRecord&)> on_record;
  // Called once the warm-up state exists (not on resume).
  std::function<void(const FederationState&)> on_warmup;
};

// Warm-up (or `resume`), then epochs up to config.epochs. Evaluates after
// warm-up, every eval_every epochs and after the final epoch.
inline ExperimentResult run_experiment(const DatasetSplit& split, const ExperimentConfig& config,
                                       const RunHooks& hooks = {},
                                       std::optional<FederationState> resume = std::nullopt) {
  validate(config, split.train.num_users());
  ExperimentResult out;
  const auto scheme = config.aggregation();
  auto emit = [&](TraceRecord r) {
    if (hooks.on_record) hooks.on_record(r);
    out.trace.push_back(std::move(r));
  };
  auto evaluate_now = [&](const FederationState& s) {
    out.last_eval = eval::evaluate_model(s.clients, s.items, scheme, split, config.eval_cutoff);
    return *out.last_eval;
  };

  if (resume) {
    out.state = std::move(*resume);
    if (out.state.items.depth() != config.latent_depth || out.state.items.dim() != config.dim) {
      throw DimensionError("resume state does not match config");
    }
  } else {
    out.state = initialize(split.train, config);
    if (hooks.on_warmup) hooks.on_warmup(out.state);
    const auto m = evaluate_now(out.state);
    emit(TraceRecord{0, std::nullopt, m.mean_recall, m.mean_ndcg});
  }

  while (out.state.epoch < config.epochs) {
    EpochReport report = run_epoch(out.state, config);
    TraceRecord rec{report.epoch, report.mean_loss, std::nullopt, std::nullopt};
    if (report.epoch % config.eval_every == 0 || report.epoch == config.epochs) {
      report.metrics = evaluate_now(out.state);
      rec.recall = report.metrics->mean_recall;
      rec.ndcg = report.metrics->mean_ndcg;
    }
    out.reports.push_back(std::move(report));
    emit(std::move(rec));
  }
  return out;
}

}  // namespace fedgrec

#endif  // FEDGREC_PROTOCOL_HPP_
