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

#include "fedgrec/client.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace fedgrec {
namespace {

ItemView scalar_view(std::vector<ItemId> ids, std::size_t depth, std::vector<double> layer0) {
  std::vector<LayeredEmbedding> e;
  for (double v : layer0) {
    LayeredEmbedding x(depth, 1);
    x.layer(0)[0] = v;
    e.push_back(x);
  }
  return ItemView(std::move(ids), std::move(e));
}

TEST(SampleItemSetTest, SaturatedUser) {
  const std::vector<ItemId> pos{0, 1, 2, 3};
  Rng rng(1);
  EXPECT_EQ(sample_item_set(pos, 4, 2048, rng), pos);
}

TEST(SampleItemSetTest, ClampsToUniverse) {
  const std::vector<ItemId> pos{1, 5, 7};
  Rng rng(2);
  const auto set = sample_item_set(pos, 10, 2048, rng);
  EXPECT_EQ(set.size(), 10u);
  EXPECT_TRUE(std::is_sorted(set.begin(), set.end()));
}

TEST(SampleItemSetTest, DeterministicUnderSeed) {
  const std::vector<ItemId> pos{3, 9};
  Rng a(3), b(3);
  EXPECT_EQ(sample_item_set(pos, 100, 10, a), sample_item_set(pos, 100, 10, b));
}

TEST(SampleItemSetTest, ContainsPositivesAndDistinctNegatives) {
  std::mt19937_64 seeds(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = testing::random_graph(1, 40, 0.2, seeds);
    const auto pos = g.items_of(0);
    if (pos.size() == 40) continue;
    Rng rng(seeds());
    const auto set = sample_item_set(pos, 40, 5, rng);
    const std::set<ItemId> unique(set.begin(), set.end());
    EXPECT_EQ(unique.size(), set.size());
    for (ItemId t : pos) EXPECT_TRUE(unique.contains(t));
    EXPECT_EQ(set.size(), pos.size() + std::min<std::size_t>(5, 40 - pos.size()));
    // Strictly more than N_u leaves the client.
    EXPECT_GT(set.size(), pos.size());
  }
}

TEST(SampleItemSetTest, NegativesAreUniform) {
  // Item 0 is the only positive; each of the 9 others is drawn with
  // probability 3/9 per query.
  const std::vector<ItemId> pos{0};
  std::vector<double> counts(10, 0.0);
  const int trials = 9000;
  for (int i = 0; i < trials; ++i) {
    Rng rng(static_cast<std::uint64_t>(i) + 100);
    for (ItemId t : sample_item_set(pos, 10, 3, rng)) counts[t] += 1.0;
  }
  EXPECT_EQ(counts[0], trials);
  for (ItemId t = 1; t < 10; ++t) {
    EXPECT_NEAR(counts[t], trials / 3.0, 5.0 * std::sqrt(trials * (1.0 / 3.0) * (2.0 / 3.0)));
  }
}

TEST(RefreshTest, HandExample) {
  // u - {t0, t1}, |N_t0| = 1, |N_t1| = 2.
  const std::vector<ItemId> pos{0, 1};
  UserState user = make_user(0, pos, 1, 1);
  const auto view = scalar_view({0, 1}, 1, {1.0, 1.0});
  const std::vector<std::size_t> degrees{1, 2};
  const auto layers = refresh_latent_user(user, view, degrees);
  ASSERT_EQ(layers.size(), 1u);
  EXPECT_NEAR(layers[0][0], 1.0 / std::sqrt(2.0) + 0.5, 1e-12);
  EXPECT_NEAR(layers[0][0], 1.20710678, 1e-8);
  EXPECT_EQ(user.embedding.layer(1)[0], 0.0);
}

TEST(RefreshTest, ZeroItemsGiveZeroLatents) {
  const std::vector<ItemId> pos{0, 2};
  UserState user = make_user(0, pos, 3, 1);
  user.embedding.layer(0)[0] = 5.0;
  const auto view = scalar_view({0, 1, 2}, 3, {0.0, 0.0, 0.0});
  const std::vector<std::size_t> degrees{1, 1, 1};
  for (const auto& l : refresh_latent_user(user, view, degrees)) EXPECT_EQ(l[0], 0.0);
}

TEST(RefreshTest, DepthZeroIsNoOp) {
  const std::vector<ItemId> pos{0};
  UserState user = make_user(0, pos, 0, 2);
  const auto view = scalar_view({0}, 0, {1.0});
  EXPECT_TRUE(refresh_latent_user(user, view, std::vector<std::size_t>{1}).empty());
}

TEST(RefreshTest, UsesSnapshotLayers) {
  // Layer k of the user comes from item layer k-1, never from a freshly
  // computed value.
  const std::vector<ItemId> pos{0};
  UserState user = make_user(0, pos, 2, 1);
  LayeredEmbedding t(2, 1);
  t.layer(0)[0] = 2.0;
  t.layer(1)[0] = 7.0;
  t.layer(2)[0] = 100.0;
  const ItemView view({0}, {t});
  const auto layers = refresh_latent_user(user, view, std::vector<std::size_t>{4});
  EXPECT_DOUBLE_EQ(layers[0][0], 2.0 * 0.5);
  EXPECT_DOUBLE_EQ(layers[1][0], 7.0 * 0.5);
}

TEST(RefreshTest, MissingItemIsProtocolError) {
  const std::vector<ItemId> pos{0, 3};
  UserState user = make_user(0, pos, 1, 1);
  const auto view = scalar_view({0, 1}, 1, {1.0, 1.0});
  EXPECT_THROW(refresh_latent_user(user, view, std::vector<std::size_t>{1, 1, 1, 1}),
               ProtocolError);
}

TEST(BprLossTest, TiedScoresGiveLn2) {
  const std::vector<ItemId> pos{0};
  UserState user = make_user(0, pos, 0, 1);
  user.embedding.layer(0)[0] = 1.0;
  const auto view = scalar_view({0, 1}, 0, {3.0, 3.0});
  const TrainingBatch batch{{{0, 1}}};
  EXPECT_NEAR(bpr_loss(user, view, batch, AggregationScheme::uniform(0), 0.0), std::log(2.0),
              1e-12);
}

TEST(BprLossTest, LargeMarginVanishes) {
  const std::vector<ItemId> pos{0};
  UserState user = make_user(0, pos, 0, 1);
  user.embedding.layer(0)[0] = 1.0;
  const auto view = scalar_view({0, 1}, 0, {30.0, 0.0});
  const TrainingBatch batch{{{0, 1}}};
  EXPECT_LT(bpr_loss(user, view, batch, AggregationScheme::uniform(0), 0.0), 1e-12);
}

TEST(BprLossTest, ScalarExample) {
  const std::vector<ItemId> pos{0};
  UserState user = make_user(0, pos, 0, 1);
  user.embedding.layer(0)[0] = 1.0;
  const auto view = scalar_view({0, 1}, 0, {2.0, 1.0});
  const TrainingBatch batch{{{0, 1}}};
  EXPECT_NEAR(bpr_loss(user, view, batch, AggregationScheme::uniform(0), 0.0), 0.313262, 1e-6);
}

TEST(BprLossTest, RegularizationCountsEachBatchItemOnce) {
  const std::vector<ItemId> pos{0, 1};
  UserState user = make_user(0, pos, 0, 1);
  user.embedding.layer(0)[0] = 2.0;
  const auto view = scalar_view({0, 1, 2}, 0, {0.0, 0.0, 3.0});
  // Both pairs use negative 2 (score 6); its norm enters the penalty once.
  const TrainingBatch batch{{{0, 2}, {1, 2}}};
  const double expected = 2.0 * std::log1p(std::exp(6.0)) + 0.5 * (4.0 + 0.0 + 0.0 + 9.0);
  EXPECT_NEAR(bpr_loss(user, view, batch, AggregationScheme::uniform(0), 0.5), expected, 1e-9);
}

TEST(BprGradientTest, TiedScoresHalfDifference) {
  const std::vector<ItemId> pos{0};
  UserState user = make_user(0, pos, 0, 2);
  user.embedding.layer(0)[0] = 1.0;
  LayeredEmbedding i(0, 2), j(0, 2);
  i.layer(0)[0] = 1.0;
  i.layer(0)[1] = 4.0;
  j.layer(0)[0] = 1.0;
  j.layer(0)[1] = -2.0;
  const ItemView view({0, 1}, {i, j});
  const auto g = bpr_gradients(user, view, TrainingBatch{{{0, 1}}}, AggregationScheme::uniform(0),
                               0.0);
  EXPECT_DOUBLE_EQ(g.user[0], 0.5 * (1.0 - 1.0));
  EXPECT_DOUBLE_EQ(g.user[1], 0.5 * (-2.0 - 4.0));
}

TEST(BprGradientTest, EmptyBatchIsRegularizationOnly) {
  const std::vector<ItemId> pos{0};
  UserState user = make_user(0, pos, 1, 2);
  user.embedding.layer(0)[0] = 1.5;
  user.embedding.layer(0)[1] = -1.0;
  const auto view = ItemView({0}, {LayeredEmbedding(1, 2)});
  const auto g = bpr_gradients(user, view, TrainingBatch{}, AggregationScheme::uniform(1), 0.1);
  EXPECT_DOUBLE_EQ(g.user[0], 0.3);
  EXPECT_DOUBLE_EQ(g.user[1], -0.2);
  EXPECT_TRUE(g.touched.empty());
  for (double x : g.items) EXPECT_EQ(x, 0.0);
}

TEST(BprGradientTest, MatchesFiniteDifferences) {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = testing::check_random_gradient(rng);
    EXPECT_LE(r.worst, 1e-5) << r.label;
  }
}

// Two users, three items; user 0 has a single negative so every batch is
// the same and its loss can be tracked step by step.
struct ToyGraph {
  InteractionGraph graph{3, {{0, 1}, {1, 2}}};
  std::vector<std::size_t> degrees{1, 2, 1};

  ItemView view(std::mt19937_64& rng) const {
    std::vector<LayeredEmbedding> e;
    for (int t = 0; t < 3; ++t) e.push_back(testing::random_layers(1, 4, rng, 0.5));
    return ItemView({0, 1, 2}, std::move(e));
  }
};

TEST(LocalTrainTest, ZeroGradientsGiveZeroDeltas) {
  // Every item is a positive, so batches are empty; with lambda = 0 nothing moves.
  const std::vector<ItemId> pos{0, 1};
  UserState user = make_user(0, pos, 1, 2);
  std::mt19937_64 seed(1);
  user.embedding = testing::random_layers(1, 2, seed);
  const ItemView view({0, 1}, {testing::random_layers(1, 2, seed), testing::random_layers(1, 2, seed)});
  LocalTrainConfig cfg;
  cfg.iterations = 1;
  cfg.l2 = 0.0;
  cfg.scheme = AggregationScheme::uniform(1);
  for (auto kind : {OptimizerConfig::Kind::kPlain, OptimizerConfig::Kind::kAdaptive}) {
    cfg.optimizer.kind = kind;
    Rng rng(1);
    const auto upd = local_train(user, view, cfg, rng);
    for (double x : upd.user_delta) EXPECT_EQ(x, 0.0);
    for (double x : upd.item_deltas) EXPECT_EQ(x, 0.0);
  }
}

TEST(LocalTrainTest, PlainOneStepIsNegativeRateTimesGradient) {
  ToyGraph toy;
  std::mt19937_64 seed(2);
  const auto view = toy.view(seed);
  UserState user = make_user(1, toy.graph.items_of(1), 1, 4);
  user.embedding = testing::random_layers(1, 4, seed);
  LocalTrainConfig cfg;
  cfg.iterations = 1;
  cfg.optimizer.kind = OptimizerConfig::Kind::kPlain;
  cfg.optimizer.rate = 0.05;
  cfg.l2 = 0.01;
  cfg.scheme = AggregationScheme::uniform(1);

  Rng rng(9), replay(9);
  const std::vector<ItemId> negatives{0};
  const auto batch = draw_batch(user.train_items, negatives, replay);
  const auto g = bpr_gradients(user, view, batch, cfg.scheme, cfg.l2);
  const Vector u0(user.embedding.layer(0).begin(), user.embedding.layer(0).end());
  const auto upd = local_train(user, view, cfg, rng);
  for (std::size_t x = 0; x < 4; ++x) {
    EXPECT_EQ(upd.user_delta[x], (u0[x] - 0.05 * g.user[x]) - u0[x]);
  }
  for (std::size_t idx = 0; idx < 3; ++idx) {
    for (std::size_t x = 0; x < 4; ++x) {
      const double before = view.embedding(idx).layer(0)[x];
      EXPECT_EQ(upd.item_deltas[idx * 4 + x], (before - 0.05 * g.items[idx * 4 + x]) - before);
    }
  }
}

TEST(LocalTrainTest, ToyLossDecreasesMonotonically) {
  ToyGraph toy;
  std::mt19937_64 seed(3);
  const auto view = toy.view(seed);
  UserState start = make_user(0, toy.graph.items_of(0), 1, 4);
  start.embedding = testing::random_layers(1, 4, seed, 0.5);
  const auto scheme = AggregationScheme::uniform(1);
  // User 0 owns {t0, t1}; t2 is its only negative.
  const TrainingBatch batch{{{0, 2}, {1, 2}}};
  double previous = bpr_loss(start, view, batch, scheme, 0.01);
  for (std::size_t steps = 1; steps <= 10; ++steps) {
    UserState user = start;
    LocalTrainConfig cfg;
    cfg.iterations = steps;
    cfg.optimizer.kind = OptimizerConfig::Kind::kPlain;
    cfg.optimizer.rate = 0.01;
    cfg.l2 = 0.01;
    cfg.scheme = scheme;
    Rng rng(4);
    const auto upd = local_train(user, view, cfg, rng);
    ItemView after = view;
    for (std::size_t idx = 0; idx < 3; ++idx) {
      for (std::size_t x = 0; x < 4; ++x) after.embedding(idx).layer(0)[x] += upd.item_deltas[idx * 4 + x];
    }
    const double loss = bpr_loss(user, after, batch, scheme, 0.01);
    EXPECT_LT(loss, previous) << "step " << steps;
    previous = loss;
  }
}

TEST(LocalTrainTest, LatentLayersAreNeverWritten) {
  ToyGraph toy;
  std::mt19937_64 seed(5);
  const auto view = toy.view(seed);
  UserState user = make_user(1, toy.graph.items_of(1), 1, 4);
  user.embedding = testing::random_layers(1, 4, seed);
  const Vector before(user.embedding.layer(1).begin(), user.embedding.layer(1).end());
  LocalTrainConfig cfg;
  cfg.scheme = AggregationScheme::uniform(1);
  Rng rng(6);
  local_train(user, view, cfg, rng);
  EXPECT_EQ(std::memcmp(before.data(), user.embedding.layer(1).data(), 4 * sizeof(double)), 0);
}

TEST(LocalTrainTest, AdamStepPersistsAcrossCalls) {
  ToyGraph toy;
  std::mt19937_64 seed(7);
  const auto view = toy.view(seed);
  UserState user = make_user(1, toy.graph.items_of(1), 1, 4);
  user.embedding = testing::random_layers(1, 4, seed);
  LocalTrainConfig cfg;
  cfg.iterations = 3;
  cfg.scheme = AggregationScheme::uniform(1);
  Rng rng(8);
  local_train(user, view, cfg, rng);
  local_train(user, view, cfg, rng);
  EXPECT_EQ(user.moments.step, 6u);
}

TEST(LocalTrainTest, NonFiniteLossDiverges) {
  ToyGraph toy;
  std::vector<LayeredEmbedding> e(3, LayeredEmbedding(0, 1));
  for (auto& x : e) x.layer(0)[0] = 1e200;
  const ItemView view({0, 1, 2}, e);
  UserState user = make_user(0, toy.graph.items_of(0), 0, 1);
  user.embedding.layer(0)[0] = 1e200;
  LocalTrainConfig cfg;
  cfg.scheme = AggregationScheme::uniform(0);
  Rng rng(9);
  EXPECT_THROW(local_train(user, view, cfg, rng), DivergenceError);
}

TEST(UpdateMatrixTest, HandExample) {
  const std::vector<ItemId> pos{3};
  UserState user = make_user(0, pos, 1, 1);
  const std::vector<std::size_t> degrees{1, 1, 1, 4};
  const std::vector<Vector> deltas{{2.0}};
  const auto m = build_update_matrix(user, degrees, deltas);
  ASSERT_EQ(m.rows, (std::vector<ItemId>{3}));
  EXPECT_DOUBLE_EQ(m.row(0, 0)[0], 1.0);
}

TEST(UpdateMatrixTest, ZeroDeltasAndSupport) {
  const std::vector<ItemId> pos{1, 4};
  UserState user = make_user(0, pos, 2, 3);
  const std::vector<std::size_t> degrees{1, 2, 1, 1, 3};
  const std::vector<Vector> deltas{Vector(3, 0.0), Vector(3, 0.0)};
  const auto m = build_update_matrix(user, degrees, deltas);
  EXPECT_EQ(m.rows, pos);
  Vector dense(5 * 3, 0.0);
  m.scatter(0, dense);
  m.scatter(1, dense);
  for (double x : dense) EXPECT_EQ(x, 0.0);

  const std::vector<Vector> ones{Vector(3, 1.0), Vector(3, 1.0)};
  const auto m2 = build_update_matrix(user, degrees, ones);
  Vector d2(5 * 3, 0.0);
  m2.scatter(1, d2);
  for (ItemId t = 0; t < 5; ++t) {
    const double expected = (t == 1 || t == 4) ? normalization(2, degrees[t]) : 0.0;
    for (std::size_t x = 0; x < 3; ++x) EXPECT_DOUBLE_EQ(d2[t * 3 + x], expected);
  }
  EXPECT_THROW(build_update_matrix(user, degrees, std::vector<Vector>{Vector(2, 0.0)}),
               DimensionError);
}

}  // namespace
}  // namespace fedgrec
