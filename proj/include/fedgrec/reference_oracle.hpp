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

#ifndef FEDGREC_REFERENCE_ORACLE_HPP_
#define FEDGREC_REFERENCE_ORACLE_HPP_

// Centralized dense LightGCN propagation. Used only to check the federated
// code paths on small graphs, so it favors plain matrix algebra over speed.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fedgrec/dataset.hpp"
#include "fedgrec/embedding.hpp"
#include "fedgrec/errors.hpp"

namespace fedgrec::oracle {

using Matrix = Eigen::MatrixXd;

struct DensePropagationState {
  std::vector<Matrix> user_layers;  // K + 1 matrices, M x d
  std::vector<Matrix> item_layers;  // K + 1 matrices, N x d

  std::size_t depth() const { return user_layers.size() - 1; }
};

// R~ with R~(u, t) = 1 / (sqrt|N_u| sqrt|N_t|) on edges.
inline Matrix normalized_adjacency(const InteractionGraph& graph) {
  Matrix r = Matrix::Zero(static_cast<Eigen::Index>(graph.num_users()),
                          static_cast<Eigen::Index>(graph.num_items()));
  for (UserId u = 0; u < graph.num_users(); ++u) {
    if (graph.user_degree(u) == 0) throw DegenerateNodeError("isolated user");
    for (ItemId t : graph.items_of(u)) {
      r(u, t) = 1.0 / (std::sqrt(static_cast<double>(graph.user_degree(u))) *
                       std::sqrt(static_cast<double>(graph.item_degree(t))));
    }
  }
  return r;
}

// Items without interactions (ids only seen in test data) have an empty
// neighbor sum, so their propagated layers are zero.
inline DensePropagationState propagate(const InteractionGraph& graph, const Matrix& user0,
                                       const Matrix& item0, std::size_t depth) {
  if (user0.rows() != static_cast<Eigen::Index>(graph.num_users()) ||
      item0.rows() != static_cast<Eigen::Index>(graph.num_items()) ||
      user0.cols() != item0.cols()) {
    throw DimensionError("propagate: layer-0 shapes do not match the graph");
  }
  const Matrix r = normalized_adjacency(graph);
  DensePropagationState s;
  s.user_layers.push_back(user0);
  s.item_layers.push_back(item0);
  for (std::size_t k = 0; k < depth; ++k) {
    s.user_layers.push_back(r * s.item_layers[k]);
    s.item_layers.push_back(r.transpose() * s.user_layers[k]);
  }
  return s;
}

inline Matrix combine(const std::vector<Matrix>& layers, const AggregationScheme& scheme) {
  const std::size_t depth = layers.size() - 1;
  scheme.check_compatible(depth);
  switch (scheme.kind()) {
    case AggregationScheme::Kind::kWeightedMean: {
      Matrix out = Matrix::Zero(layers[0].rows(), layers[0].cols());
      for (std::size_t k = 0; k <= depth; ++k) out += scheme.weights()[k] * layers[k];
      return out;
    }
    case AggregationScheme::Kind::kLastPair:
      return 0.5 * (layers.front() + layers.back());
    case AggregationScheme::Kind::kConcat: {
      const auto d = layers[0].cols();
      Matrix out(layers[0].rows(), d * static_cast<Eigen::Index>(depth + 1));
      for (std::size_t k = 0; k <= depth; ++k) {
        out.middleCols(static_cast<Eigen::Index>(k) * d, d) = layers[k];
      }
      return out;
    }
  }
  return {};
}

// M x N matrix of <e_u, e_t> over final representations.
inline Matrix centralized_scores(const DensePropagationState& state,
                                 const AggregationScheme& scheme) {
  return combine(state.user_layers, scheme) * combine(state.item_layers, scheme).transpose();
}

}  // namespace fedgrec::oracle

#endif  // FEDGREC_REFERENCE_ORACLE_HPP_
