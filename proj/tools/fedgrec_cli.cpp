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

// fedgrec: command-line front end.
//
//   fedgrec synth  --out DIR [--users ... --seed ...]
//   fedgrec train  --dataset DIR --out DIR [--config FILE] [--<field> VALUE ...]
//   fedgrec verify --dataset DIR [--latent_depth K] [--seed S] [--checkpoint FILE]
//   fedgrec eval   --checkpoint FILE --dataset DIR [--cutoff N]
//
// Exit codes: 0 success, 1 validation, 2 runtime divergence, 3 I/O.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fedgrec/config_io.hpp"
#include "fedgrec/fedgrec.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "fedgrec 0.1.0";
constexpr double kVerifyTolerance = 1e-5;
constexpr std::size_t kVerifyMaxNodes = 1000;

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kIo = 3 };

fedgrec::DatasetSplit load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw fedgrec::IoError("dataset not found: " + dir.string());
  return fedgrec::load_split(dir / "train.txt", dir / "test.txt");
}

// Optional overrides, one per ExperimentConfig field.
struct Overrides {
  std::optional<std::size_t> epochs, users_per_epoch, local_iterations, latent_depth, dim,
      neg_count, eval_every, eval_cutoff;
  std::optional<double> local_rate, server_rate, l2, init_scale;
  std::optional<std::string> scheme, optimizer;
  std::optional<std::vector<double>> scheme_weights;
  std::optional<std::uint64_t> master_seed;
  std::optional<unsigned> frac_bits;

  void attach(CLI::App* app) {
    app->add_option("--epochs", epochs, "global epochs T");
    app->add_option("--users_per_epoch", users_per_epoch, "users sampled per epoch S");
    app->add_option("--local_iterations", local_iterations, "local iterations tau");
    app->add_option("--latent_depth", latent_depth, "latent embeddings K");
    app->add_option("--dim", dim, "embedding dimension d");
    app->add_option("--local_rate", local_rate, "local learning rate beta");
    app->add_option("--server_rate", server_rate, "server rate alpha (default 1/S)");
    app->add_option("--l2", l2, "L2 weight lambda");
    app->add_option("--init_scale", init_scale, "init standard deviation sigma");
    app->add_option("--neg_count", neg_count, "negatives queried per user");
    app->add_option("--scheme", scheme, "weighted_mean | last_pair | concat");
    app->add_option("--scheme_weights", scheme_weights, "weighted_mean weights");
    app->add_option("--optimizer", optimizer, "plain | adaptive");
    app->add_option("--eval_every", eval_every, "evaluation cadence in epochs");
    app->add_option("--eval_cutoff", eval_cutoff, "top-N cutoff");
    app->add_option("--master_seed", master_seed, "master random seed");
    app->add_option("--frac_bits", frac_bits, "fixed-point fractional bits");
  }

  void apply(fedgrec::ExperimentConfig& c) const {
    if (epochs) c.epochs = *epochs;
    if (users_per_epoch) c.users_per_epoch = *users_per_epoch;
    if (local_iterations) c.local_iterations = *local_iterations;
    if (latent_depth) {
      // A new depth invalidates weights resolved for the old one.
      if (*latent_depth != c.latent_depth && !scheme_weights) c.scheme_weights.clear();
      c.latent_depth = *latent_depth;
    }
    if (dim) c.dim = *dim;
    if (local_rate) c.local_rate = *local_rate;
    if (server_rate) c.server_rate = *server_rate;
    if (l2) c.l2 = *l2;
    if (init_scale) c.init_scale = *init_scale;
    if (neg_count) c.neg_count = *neg_count;
    if (scheme) c.scheme = *scheme;
    if (scheme_weights) c.scheme_weights = *scheme_weights;
    if (optimizer) c.optimizer = fedgrec::parse_optimizer(*optimizer);
    if (eval_every) c.eval_every = *eval_every;
    if (eval_cutoff) c.eval_cutoff = *eval_cutoff;
    if (master_seed) c.master_seed = *master_seed;
    if (frac_bits) c.frac_bits = *frac_bits;
  }
};

int cmd_synth(const fedgrec::BlockModelParams& p, const fs::path& out) {
  const auto split = fedgrec::synth_blocks(p);
  fs::create_directories(out);
  fedgrec::save_split(split, out / "train.txt", out / "test.txt");
  std::cout << "users=" << split.train.num_users() << " items=" << split.train.num_items()
            << " train_interactions=" << split.train.num_interactions() << '\n';
  return kOk;
}

int cmd_train(const std::optional<fs::path>& config_path, const fs::path& dataset_dir,
              const fs::path& out_dir, const Overrides& overrides,
              const std::optional<fs::path>& resume) {
  fedgrec::ExperimentConfig config;
  if (config_path) config = fedgrec::load_config(*config_path);
  overrides.apply(config);
  const auto split = load_dataset(dataset_dir);
  fedgrec::validate(config, split.train.num_users());

  fs::create_directories(out_dir);
  const fs::path trace_path = out_dir / "trace.csv";
  const fs::path warmup_path = out_dir / "warmup.ckpt";
  const fs::path final_path = out_dir / "final.ckpt";
  const fs::path table_path = out_dir / "per_user.csv";
  const fs::path manifest_path = out_dir / "manifest.json";

  nlohmann::json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["config"] = fedgrec::to_json(config);
  manifest["dataset"] = {{"dir", dataset_dir.string()},
                         {"fingerprint", fedgrec::fingerprint(split)},
                         {"num_users", split.train.num_users()},
                         {"num_items", split.train.num_items()}};
  manifest["artifacts"] = {{"trace", trace_path.string()},
                           {"warmup_checkpoint", warmup_path.string()},
                           {"final_checkpoint", final_path.string()},
                           {"per_user", table_path.string()}};
  if (resume) manifest["resumed_from"] = resume->string();
  {
    std::ofstream m(manifest_path);
    if (!m) throw fedgrec::IoError("cannot write " + manifest_path.string());
    m << manifest.dump(2) << '\n';
  }

  std::ofstream trace(trace_path, std::ios::binary);
  if (!trace) throw fedgrec::IoError("cannot write " + trace_path.string());
  trace << fedgrec::kTraceHeader << '\n';

  std::optional<fedgrec::FederationState> start;
  if (resume) {
    start = fedgrec::from_checkpoint(fedgrec::load_checkpoint(*resume), split.train,
                                     config.master_seed, config.frac_bits);
  }
  fedgrec::RunHooks hooks;
  hooks.on_record = [&](const fedgrec::TraceRecord& r) {
    trace << fedgrec::format_trace_record(r) << '\n';
    trace.flush();
  };
  hooks.on_warmup = [&](const fedgrec::FederationState& s) {
    fedgrec::save_checkpoint(fedgrec::to_checkpoint(s, config), warmup_path);
  };
  const auto result = fedgrec::run_experiment(split, config, hooks, std::move(start));
  fedgrec::save_checkpoint(fedgrec::to_checkpoint(result.state, config), final_path);
  if (result.last_eval) {
    fedgrec::eval::write_per_user_table(*result.last_eval, table_path);
    std::cout << "epoch=" << result.state.epoch << " recall@" << config.eval_cutoff << '='
              << result.last_eval->mean_recall << " ndcg@" << config.eval_cutoff << '='
              << result.last_eval->mean_ndcg << '\n';
  }
  return kOk;
}

int cmd_verify(const fs::path& dataset_dir, std::size_t depth, std::uint64_t seed,
               std::size_t dim, double init_scale,
               const std::optional<fs::path>& checkpoint) {
  const auto split = load_dataset(dataset_dir);
  const auto& graph = split.train;
  if (graph.num_users() + graph.num_items() > kVerifyMaxNodes) {
    std::cerr << "verify: graph has " << graph.num_users() + graph.num_items()
              << " nodes; the dense oracle is limited to " << kVerifyMaxNodes << '\n';
    return kValidation;
  }
  double deviation = 0.0;
  if (checkpoint) {
    const auto state = fedgrec::from_checkpoint(fedgrec::load_checkpoint(*checkpoint), graph, seed);
    deviation = fedgrec::max_latent_deviation(graph, state.clients, state.items);
  } else {
    auto clients = fedgrec::make_clients(graph, depth, dim);
    const auto items = fedgrec::warmup(clients, graph.num_users(), graph.num_items(),
                                       fedgrec::WarmupConfig{depth, dim, init_scale, seed});
    deviation = fedgrec::max_latent_deviation(graph, clients, items);
  }
  std::cout << "max_abs_deviation=" << deviation << " tolerance=" << kVerifyTolerance << '\n';
  return deviation <= kVerifyTolerance ? kOk : kRuntime;
}

int cmd_eval(const fs::path& checkpoint_path, const fs::path& dataset_dir, std::size_t cutoff,
             bool uncapped, const std::optional<fs::path>& table) {
  const auto split = load_dataset(dataset_dir);
  const auto ckpt = fedgrec::load_checkpoint(checkpoint_path);
  const auto state = fedgrec::from_checkpoint(ckpt, split.train, 0);
  const auto result = fedgrec::eval::evaluate_model(
      state.clients, state.items, ckpt.scheme, split, cutoff,
      uncapped ? fedgrec::eval::IdealDcg::kUncapped : fedgrec::eval::IdealDcg::kCapped);
  const fs::path table_path =
      table ? *table : fs::path(checkpoint_path.string() + ".per_user.csv");
  fedgrec::eval::write_per_user_table(result, table_path);
  std::cout << "recall@" << cutoff << '=' << result.mean_recall << " ndcg@" << cutoff << '='
            << result.mean_ndcg << " users=" << result.per_user.size() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated graph recommender simulator"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a planted-community dataset");
  fedgrec::BlockModelParams params;
  fs::path synth_out;
  synth->add_option("--users", params.users);
  synth->add_option("--items", params.items);
  synth->add_option("--communities", params.communities);
  synth->add_option("--p_in", params.p_in);
  synth->add_option("--p_out", params.p_out);
  synth->add_option("--holdout", params.holdout);
  synth->add_option("--seed", params.seed);
  synth->add_option("--out", synth_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "warm-up and train");
  std::optional<fs::path> config_path, resume;
  fs::path dataset_dir, out_dir;
  Overrides overrides;
  train->add_option("--config", config_path, "JSON config or run manifest");
  train->add_option("--dataset", dataset_dir, "directory with train.txt and test.txt")->required();
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");
  overrides.attach(train);

  auto* verify = app.add_subcommand("verify", "check warm-up latents against dense propagation");
  std::size_t verify_depth = 2, verify_dim = 8;
  std::uint64_t verify_seed = 1;
  double verify_scale = 0.1;
  std::optional<fs::path> verify_ckpt;
  verify->add_option("--dataset", dataset_dir)->required();
  verify->add_option("--latent_depth,-K", verify_depth);
  verify->add_option("--seed", verify_seed);
  verify->add_option("--dim", verify_dim);
  verify->add_option("--init_scale", verify_scale);
  verify->add_option("--checkpoint", verify_ckpt, "verify a saved warm-up checkpoint instead");

  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  fs::path eval_ckpt;
  std::size_t cutoff = fedgrec::eval::kDefaultCutoff;
  bool uncapped = false;
  std::optional<fs::path> table;
  evalc->add_option("--checkpoint", eval_ckpt)->required();
  evalc->add_option("--dataset", dataset_dir)->required();
  evalc->add_option("--cutoff,-N", cutoff);
  evalc->add_flag("--uncapped_idcg", uncapped, "sum the ideal DCG over all test items");
  evalc->add_option("--table", table, "per-user CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*synth) return cmd_synth(params, synth_out);
    if (*train) return cmd_train(config_path, dataset_dir, out_dir, overrides, resume);
    if (*verify) {
      return cmd_verify(dataset_dir, verify_depth, verify_seed, verify_dim, verify_scale,
                        verify_ckpt);
    }
    if (*evalc) return cmd_eval(eval_ckpt, dataset_dir, cutoff, uncapped, table);
  } catch (const fedgrec::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fedgrec::DivergenceError& e) {
    std::cerr << "error: diverged at epoch " << e.epoch() << ": " << e.what() << '\n';
    return kRuntime;
  } catch (const fedgrec::GenerationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const fedgrec::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kValidation;
}
