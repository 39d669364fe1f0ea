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

#ifndef FEDGREC_EMBEDDING_HPP_
#define FEDGREC_EMBEDDING_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedgrec/errors.hpp"

namespace fedgrec {

using Vector = std::vector<double>;

// Layers 0..K of one node, stored contiguously. Layer 0 is learnable, layers
// 1..K hold the propagated (latent) embeddings.
class LayeredEmbedding {
 public:
  LayeredEmbedding() = default;
  LayeredEmbedding(std::size_t depth, std::size_t dim)
      : depth_(depth), dim_(dim), values_((depth + 1) * dim, 0.0) {}

  std::size_t depth() const { return depth_; }
  std::size_t dim() const { return dim_; }

  std::span<double> layer(std::size_t k) {
    return std::span<double>(values_).subspan(k * dim_, dim_);
  }
  std::span<const double> layer(std::size_t k) const {
    return std::span<const double>(values_).subspan(k * dim_, dim_);
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const LayeredEmbedding&,
                         const LayeredEmbedding&) = default;

 private:
  std::size_t depth_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

// How layers 0..K combine into the representation used for scoring.
class AggregationScheme {
 public:
  enum class Kind : std::uint8_t { kWeightedMean = 0, kLastPair = 1, kConcat = 2 };

  AggregationScheme() = default;

  static AggregationScheme weighted_mean(std::vector<double> weights) {
    if (weights.empty()) throw ValidationError("weighted_mean: no weights");
    for (double w : weights) {
      if (!std::isfinite(w)) throw ValidationError("weighted_mean: non-finite weight");
    }
    AggregationScheme s;
    s.kind_ = Kind::kWeightedMean;
    s.weights_ = std::move(weights);
    return s;
  }
  // alpha_k = 1 / (K + 1).
  static AggregationScheme uniform(std::size_t depth) {
    return weighted_mean(Vector(depth + 1, 1.0 / static_cast<double>(depth + 1)));
  }
  static AggregationScheme last_pair() {
    AggregationScheme s;
    s.kind_ = Kind::kLastPair;
    return s;
  }
  static AggregationScheme concat() {
    AggregationScheme s;
    s.kind_ = Kind::kConcat;
    return s;
  }

  Kind kind() const { return kind_; }
  const Vector& weights() const { return weights_; }

  void check_compatible(std::size_t depth) const {
    if (kind_ == Kind::kWeightedMean && weights_.size() != depth + 1) {
      throw DimensionError("weighted_mean has " + std::to_string(weights_.size()) +
                           " weights for " + std::to_string(depth + 1) + " layers");
    }
  }

  std::size_t output_dim(std::size_t depth, std::size_t dim) const {
    return kind_ == Kind::kConcat ? (depth + 1) * dim : dim;
  }

  friend bool operator==(const AggregationScheme&,
                         const AggregationScheme&) = default;

 private:
  Kind kind_ = Kind::kWeightedMean;
  Vector weights_{1.0};
};

inline std::string_view to_string(AggregationScheme::Kind kind) {
  switch (kind) {
    case AggregationScheme::Kind::kWeightedMean: return "weighted_mean";
    case AggregationScheme::Kind::kLastPair: return "last_pair";
    case AggregationScheme::Kind::kConcat: return "concat";
  }
  return "unknown";
}

// Parses a scheme name. An empty weight list selects the uniform default.
inline AggregationScheme parse_scheme(std::string_view name, std::size_t depth,
                                      Vector weights = {}) {
  if (name == "weighted_mean") {
    return weights.empty() ? AggregationScheme::uniform(depth)
                           : AggregationScheme::weighted_mean(std::move(weights));
  }
  if (name == "last_pair") return AggregationScheme::last_pair();
  if (name == "concat") return AggregationScheme::concat();
  throw ValidationError("unknown aggregation scheme '" + std::string(name) + "'");
}

// weighted_mean: sum_k alpha_k e^k. last_pair: (e^0 + e^K) / 2.
// concat: [e^0, e^1, ..., e^K].
inline Vector final_representation(const LayeredEmbedding& e,
                                   const AggregationScheme& scheme) {
  scheme.check_compatible(e.depth());
  const std::size_t d = e.dim();
  switch (scheme.kind()) {
    case AggregationScheme::Kind::kWeightedMean: {
      Vector out(d, 0.0);
      for (std::size_t k = 0; k <= e.depth(); ++k) {
        const double a = scheme.weights()[k];
        auto layer = e.layer(k);
        for (std::size_t i = 0; i < d; ++i) out[i] += a * layer[i];
      }
      return out;
    }
    case AggregationScheme::Kind::kLastPair: {
      Vector out(d);
      auto first = e.layer(0);
      auto last = e.layer(e.depth());
      for (std::size_t i = 0; i < d; ++i) out[i] = 0.5 * (first[i] + last[i]);
      return out;
    }
    case AggregationScheme::Kind::kConcat: {
      auto v = e.values();
      return Vector(v.begin(), v.end());
    }
  }
  return {};
}

// Transpose of d(representation)/d(layer 0) applied to `rep`: the layer-0
// gradient of <representation, rep>.
inline Vector layer0_pullback(const AggregationScheme& scheme, std::size_t depth,
                              std::size_t dim, std::span<const double> rep) {
  Vector out(dim);
  switch (scheme.kind()) {
    case AggregationScheme::Kind::kWeightedMean: {
      const double c = scheme.weights()[0];
      for (std::size_t i = 0; i < dim; ++i) out[i] = c * rep[i];
      break;
    }
    case AggregationScheme::Kind::kLastPair: {
      // With K = 0 both halves are layer 0.
      const double c = depth == 0 ? 1.0 : 0.5;
      for (std::size_t i = 0; i < dim; ++i) out[i] = c * rep[i];
      break;
    }
    case AggregationScheme::Kind::kConcat:
      std::copy_n(rep.begin(), dim, out.begin());
      break;
  }
  return out;
}

inline double score(std::span<const double> user_rep,
                    std::span<const double> item_rep) {
  if (user_rep.size() != item_rep.size()) {
    throw DimensionError("score: length " + std::to_string(user_rep.size()) +
                         " vs " + std::to_string(item_rep.size()));
  }
  return std::inner_product(user_rep.begin(), user_rep.end(), item_rep.begin(),
                            0.0);
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace fedgrec

#endif  // FEDGREC_EMBEDDING_HPP_
