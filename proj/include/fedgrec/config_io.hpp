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

#ifndef FEDGREC_CONFIG_IO_HPP_
#define FEDGREC_CONFIG_IO_HPP_

// Flat JSON form of ExperimentConfig; keys are the field names. A run
// manifest (an object with a "config" member) is accepted wherever a config
// file is.

#include <filesystem>
#include <fstream>
#include <string>

#include "fedgrec/errors.hpp"
#include "fedgrec/protocol.hpp"
#include "json.hpp"

namespace fedgrec {

inline std::string_view to_string(OptimizerConfig::Kind k) {
  return k == OptimizerConfig::Kind::kPlain ? "plain" : "adaptive";
}

inline OptimizerConfig::Kind parse_optimizer(const std::string& s) {
  if (s == "plain") return OptimizerConfig::Kind::kPlain;
  if (s == "adaptive") return OptimizerConfig::Kind::kAdaptive;
  throw ValidationError("unknown optimizer '" + s + "' (plain | adaptive)");
}

// Fully resolved: server_rate and scheme weights are written out explicitly.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto scheme = c.aggregation();
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["users_per_epoch"] = c.users_per_epoch;
  j["local_iterations"] = c.local_iterations;
  j["latent_depth"] = c.latent_depth;
  j["dim"] = c.dim;
  j["local_rate"] = c.local_rate;
  j["server_rate"] = c.resolved_server_rate();
  j["l2"] = c.l2;
  j["init_scale"] = c.init_scale;
  j["neg_count"] = c.neg_count;
  j["scheme"] = c.scheme;
  j["scheme_weights"] = scheme.weights();
  if (scheme.kind() != AggregationScheme::Kind::kWeightedMean) {
    j["scheme_weights"] = nlohmann::json::array();
  }
  j["optimizer"] = std::string(to_string(c.optimizer));
  j["eval_every"] = c.eval_every;
  j["eval_cutoff"] = c.eval_cutoff;
  j["master_seed"] = c.master_seed;
  j["frac_bits"] = c.frac_bits;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& in) {
  const nlohmann::json& j = in.contains("config") ? in.at("config") : in;
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  ExperimentConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "users_per_epoch") c.users_per_epoch = value.get<std::size_t>();
      else if (key == "local_iterations") c.local_iterations = value.get<std::size_t>();
      else if (key == "latent_depth") c.latent_depth = value.get<std::size_t>();
      else if (key == "dim") c.dim = value.get<std::size_t>();
      else if (key == "local_rate") c.local_rate = value.get<double>();
      else if (key == "server_rate") {
        if (!value.is_null()) c.server_rate = value.get<double>();
      } else if (key == "l2") c.l2 = value.get<double>();
      else if (key == "init_scale") c.init_scale = value.get<double>();
      else if (key == "neg_count") c.neg_count = value.get<std::size_t>();
      else if (key == "scheme") c.scheme = value.get<std::string>();
      else if (key == "scheme_weights") c.scheme_weights = value.get<Vector>();
      else if (key == "optimizer") c.optimizer = parse_optimizer(value.get<std::string>());
      else if (key == "eval_every") c.eval_every = value.get<std::size_t>();
      else if (key == "eval_cutoff") c.eval_cutoff = value.get<std::size_t>();
      else if (key == "master_seed") c.master_seed = value.get<std::uint64_t>();
      else if (key == "frac_bits") c.frac_bits = value.get<unsigned>();
      else throw ValidationError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config not found: " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

}  // namespace fedgrec

#endif  // FEDGREC_CONFIG_IO_HPP_
