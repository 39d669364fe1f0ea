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

#ifndef FEDGREC_VERIFY_HPP_
#define FEDGREC_VERIFY_HPP_

#include <algorithm>
#include <cmath>
#include <span>

#include "fedgrec/client.hpp"
#include "fedgrec/dataset.hpp"
#include "fedgrec/reference_oracle.hpp"
#include "fedgrec/server.hpp"

namespace fedgrec {

// Max |federated - centralized| over every latent layer (k >= 1) of users and
// items, where the centralized layers are propagated from the federation's
// own layer-0 embeddings. Zero deviation means the latents satisfy the
// propagation rule exactly.
inline double max_latent_deviation(const InteractionGraph& graph,
                                   std::span<const UserState> clients, const ItemStore& items) {
  const std::size_t m = graph.num_users(), n = graph.num_items();
  const std::size_t d = items.dim(), depth = items.depth();
  if (clients.size() != m || items.num_items() != n) {
    throw DimensionError("max_latent_deviation: shapes do not match the graph");
  }
  oracle::Matrix user0(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  oracle::Matrix item0(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t x = 0; x < d; ++x) user0(u, x) = clients[u].embedding.layer(0)[x];
  }
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t x = 0; x < d; ++x) item0(t, x) = items.row(0, static_cast<ItemId>(t))[x];
  }
  const auto ref = oracle::propagate(graph, user0, item0, depth);
  double worst = 0.0;
  for (std::size_t k = 1; k <= depth; ++k) {
    for (std::size_t u = 0; u < m; ++u) {
      for (std::size_t x = 0; x < d; ++x) {
        worst = std::max(worst, std::fabs(clients[u].embedding.layer(k)[x] - ref.user_layers[k](u, x)));
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t x = 0; x < d; ++x) {
        worst = std::max(worst, std::fabs(items.row(k, static_cast<ItemId>(t))[x] -
                                          ref.item_layers[k](t, x)));
      }
    }
  }
  return worst;
}

}  // namespace fedgrec

#endif  // FEDGREC_VERIFY_HPP_
