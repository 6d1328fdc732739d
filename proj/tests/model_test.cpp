/*
 * Copyright 2026 The fedsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedsim/model.hpp"
#include "test_support.hpp"

namespace fedsim {
namespace {

using testing::random_batch;
using testing::random_params;

const Batch kNoData{};

double rel_error(const ParamVector& a, const ParamVector& b) {
  return (a - b).norm() / std::max(1.0, a.norm());
}

TEST(Quadratic, LossAndGrad) {
  const Model q = QuadraticFed::isotropic({1.0});
  EXPECT_EQ(loss(q, ParamVector{0.0}, kNoData), 0.5);
  EXPECT_EQ(loss(q, ParamVector{1.0}, kNoData), 0.0);
  EXPECT_EQ(grad(q, ParamVector{0.0}, kNoData)[0], -1.0);
  EXPECT_THROW(loss(q, ParamVector(2), kNoData), DimensionError);
}

TEST(Quadratic, FiniteDifferences) {
  const Model q = QuadraticFed::isotropic({1.0});
  EXPECT_NEAR(finite_diff_grad(q, ParamVector{0.0}, kNoData, 1e-5)[0], -1.0, 1e-8);
  const Model q2 = QuadraticFed{{0.0, 0.0}, {1.0, 2.0}};
  const auto g = finite_diff_grad(q2, ParamVector{1.0, 1.0}, kNoData, 1e-5);
  EXPECT_NEAR(g[0], 1.0, 1e-8);
  EXPECT_NEAR(g[1], 2.0, 1e-8);
  EXPECT_THROW(finite_diff_grad(q2, ParamVector(2), kNoData, 0.0), std::invalid_argument);
}

TEST(Quadratic, Hvp) {
  const Model q = QuadraticFed{{0.5, -1.0, 2.0}, {1.0, 2.0, 3.0}};
  const ParamVector p{0.3, 0.1, -0.2};
  const auto hv = hvp(q, p, kNoData, ParamVector{1, 1, 1});
  EXPECT_NEAR(hv[0], 1.0, 1e-9);
  EXPECT_NEAR(hv[1], 2.0, 1e-9);
  EXPECT_NEAR(hv[2], 3.0, 1e-9);
  const auto e1 = hvp(q, p, kNoData, ParamVector{1, 0, 0});
  EXPECT_NEAR(e1[0], 1.0, 1e-9);
  EXPECT_NEAR(e1[1], 0.0, 1e-9);
  EXPECT_NEAR(e1[2], 0.0, 1e-9);
  EXPECT_THROW(hvp(q, p, kNoData, ParamVector(3)), std::invalid_argument);
}

TEST(Logistic, LossMatchesOracle) {
  Rng rng(1);
  const Model m = LogisticRegression{5, 3};
  for (int t = 0; t < 20; ++t) {
    const auto p = random_params(rng, m.dim());
    const auto b = random_batch(rng, 16, 5, 3);
    EXPECT_NEAR(loss(m, p, b), testing::oracle_network_loss({5, 3}, p.values(), b), 1e-12);
  }
}

TEST(Mlp, LossMatchesOracle) {
  Rng rng(2);
  const std::vector<std::size_t> sizes = {4, 6, 5, 3};
  const Model m = Mlp{sizes};
  for (int t = 0; t < 20; ++t) {
    const auto p = random_params(rng, m.dim(), 0.7);
    const auto b = random_batch(rng, 12, 4, 3);
    EXPECT_NEAR(loss(m, p, b), testing::oracle_network_loss(sizes, p.values(), b), 1e-12);
  }
}

TEST(Models, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  std::vector<Model> models = {QuadraticFed{{1.0, -2.0, 0.5, 3.0}, {0.5, 1.0, 2.0, 4.0}}, LogisticRegression{6, 4},
                               Mlp{{6, 8, 4}}};
  for (const auto& m : models) {
    for (int t = 0; t < 100; ++t) {
      const auto p = random_params(rng, m.dim(), 0.5);
      const Batch b = m.is_quadratic() ? Batch{} : random_batch(rng, 10, 6, 4);
      const auto g = grad(m, p, b);
      const auto fd = finite_diff_grad(m, p, b, 1e-5);
      ASSERT_LE(rel_error(g, fd), 1e-5);
    }
  }
}

TEST(Mlp, ZeroWeightsBalancedBatchHasZeroGradient) {
  const Model m = Mlp{{3, 4, 3}};
  Rng rng(4);
  Batch b;
  b.input_dim = 3;
  for (int y = 0; y < 3; ++y) {
    for (int rep = 0; rep < 2; ++rep) {
      for (int k = 0; k < 3; ++k) b.features.push_back(rng.normal());
      b.labels.push_back(y);
    }
  }
  const auto g = grad(m, ParamVector(m.dim()), b);
  EXPECT_EQ(g.squared_norm(), 0.0);
}

TEST(Mlp, HvpSymmetricAndLinear) {
  Rng rng(5);
  const Model m = Mlp{{4, 5, 3}};
  const auto p = random_params(rng, m.dim(), 0.5);
  const auto b = random_batch(rng, 20, 4, 3);
  for (int t = 0; t < 10; ++t) {
    const auto u = random_params(rng, m.dim());
    const auto v = random_params(rng, m.dim());
    const double vhu = v.dot(hvp(m, p, b, u));
    const double uhv = u.dot(hvp(m, p, b, v));
    EXPECT_LE(std::abs(vhu - uhv), 1e-4 * std::max(1.0, std::abs(vhu)));
    const auto lhs = hvp(m, p, b, 2.0 * u - 0.5 * v);
    const auto rhs = 2.0 * hvp(m, p, b, u) - 0.5 * hvp(m, p, b, v);
    EXPECT_LE(rel_error(rhs, lhs), 1e-4);
  }
}

TEST(Quadratic, HvpLinearExactly) {
  const Model q = QuadraticFed{{0.0, 0.0}, {1.0, 2.0}};
  const ParamVector p{0.25, 0.5};
  const ParamVector u{1.0, 0.0}, v{0.0, 1.0};
  const auto lhs = hvp(q, p, kNoData, 2.0 * u + 3.0 * v);
  EXPECT_NEAR(lhs[0], 2.0, 1e-9);
  EXPECT_NEAR(lhs[1], 6.0, 1e-9);
}

TEST(Models, PureFunctions) {
  Rng rng(6);
  const Model m = Mlp{{3, 4, 2}};
  const auto p = random_params(rng, m.dim());
  const auto b = random_batch(rng, 8, 3, 2);
  EXPECT_EQ(loss(m, p, b), loss(m, p, b));
  EXPECT_EQ(grad(m, p, b), grad(m, p, b));
  const auto [l, g] = loss_and_grad(m, p, b);
  EXPECT_EQ(l, loss(m, p, b));
  EXPECT_EQ(g, grad(m, p, b));
}

TEST(Models, InputValidation) {
  const Model m = LogisticRegression{3, 2};
  Rng rng(7);
  auto b = random_batch(rng, 4, 3, 2);
  EXPECT_THROW(loss(m, ParamVector(m.dim()), Batch{}), std::invalid_argument);
  b.labels[0] = 2;
  EXPECT_THROW(loss(m, ParamVector(m.dim()), b), std::invalid_argument);
  EXPECT_THROW(Model(Mlp{{3}}), std::invalid_argument);
  EXPECT_THROW(Model(QuadraticFed{{1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST(Models, LayerShapesAndInit) {
  const Model m = Mlp{{4, 3, 2}};
  EXPECT_EQ(m.dim(), 4u * 3 + 3 + 3 * 2 + 2);
  Rng rng(8);
  const auto p = initial_params(m, rng);
  ASSERT_EQ(p.layer_shapes().size(), 4u);
  EXPECT_EQ(p.layer_shapes()[0].rows, 3u);
  EXPECT_EQ(p.layer_shapes()[0].cols, 4u);
  for (std::size_t j = 0; j < 15; ++j) EXPECT_LE(std::abs(p[j]), 0.5);  // 1/sqrt(4)
  const auto w = weight_layers(m, p);
  ASSERT_EQ(w.size(), 12u + 6u);
  EXPECT_EQ(w[12], p[15]);  // first entry of the second weight matrix
  Rng rng2(8);
  EXPECT_EQ(initial_params(LogisticRegression{4, 2}, rng2).squared_norm(), 0.0);
}

TEST(Models, Accuracy) {
  const Model m = LogisticRegression{2, 2};
  // logits = W x: class 0 scores x0, class 1 scores x1.
  const ParamVector p{1, 0, 0, 1, 0, 0};
  Batch b;
  b.input_dim = 2;
  b.features = {1, 0, 0, 1, 1, 0, 0, 1};
  b.labels = {0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(accuracy(m, p, b), 0.75);
}

}  // namespace
}  // namespace fedsim
