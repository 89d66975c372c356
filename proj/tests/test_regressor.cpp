/* Copyright 2026 The cmfkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <doctest.h>

#include <cmath>
#include <random>

#include "cmf/regressor.hpp"
#include "support.hpp"

using namespace cmf;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

FeatureVector plain(std::vector<double> values) {
  FeatureVector v;
  v.blocks = BlockSizes{values.size(), 0, 0};
  v.values = std::move(values);
  return v;
}

MLPModel two_two_one() {
  DenseLayer h{Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)};
  h.weight << 0.1, -0.2, 0.3, 0.4;
  h.bias << 0.05, -0.1;
  DenseLayer o{Eigen::MatrixXd(1, 2), Eigen::VectorXd(1)};
  o.weight << 0.7, -0.5;
  o.bias << 0.2;
  return MLPModel({h, o}, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), BlockSizes{2, 0, 0});
}

TrainConfig quick(std::vector<std::size_t> hidden, int epochs) {
  TrainConfig c;
  c.hidden = std::move(hidden);
  c.epochs = epochs;
  c.learning_rate = 1e-2;
  c.batch_size = 8;
  c.validation_fraction = 0.0;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("hand-computed forward pass of a 2-2-1 network") {
  const auto model = two_two_one();
  const double x0 = 1.5, x1 = -0.5;
  const double h0 = sigmoid(0.1 * x0 - 0.2 * x1 + 0.05);
  const double h1 = sigmoid(0.3 * x0 + 0.4 * x1 - 0.1);
  const double expected = 2.0 * sigmoid(0.7 * h0 - 0.5 * h1 + 0.2);
  CHECK(std::fabs(model.predict(plain({x0, x1})) - expected) < 1e-9);
}

TEST_CASE("standardization uses the stored statistics") {
  DenseLayer o{Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Zero(1)};
  Eigen::VectorXd mean(2), scale(2);
  mean << 10, 20;
  scale << 2, 4;
  const MLPModel m({o}, mean, scale, BlockSizes{2, 0, 0});
  CHECK(m.predict(plain({12, 16})) == doctest::Approx(2.0 * sigmoid(1.0 - 1.0)));
}

TEST_CASE("zero weights predict exactly one") {
  auto model = random_model(5, {4, 3}, 1);
  model = model.with_parameters(Eigen::VectorXd::Zero(model.parameters().size()));
  CHECK(model.predict(plain({1, 2, 3, 4, 5})) == 1.0);
}

TEST_CASE("property: predictions stay strictly inside (0, 2)") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 50);
  for (int t = 0; t < 200; ++t) {
    const auto model = random_model(4, {3}, static_cast<std::uint64_t>(t), 3.0);
    const auto v = plain({n(rng), n(rng), n(rng), n(rng)});
    const double y = model.predict(v);
    CHECK(y > 0.0);
    CHECK(y < 2.0);
    CHECK(model.predict(v) == y);
  }
}

TEST_CASE("input length mismatch is a domain error") {
  CHECK_THROWS_AS(two_two_one().predict(plain({1, 2, 3})), DomainError);
}

TEST_CASE("gradient check on random small networks") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto model = random_model(3, {4, 3}, s);
    const auto v = plain({n(rng), n(rng), n(rng)});
    CHECK(gradient_check(model, v, 0.8) < 1e-4);
  }
}

TEST_CASE("gradient check at a zero-gradient point falls back to the absolute floor") {
  auto model = random_model(2, {2}, 9);
  model = model.with_parameters(Eigen::VectorXd::Zero(model.parameters().size()));
  // Output is exactly 1.0, so the squared loss and its gradient vanish.
  CHECK(model.loss(std::vector<double>{0.3, -0.2}, 1.0) == 0.0);
  CHECK(gradient_check(model, plain({0.3, -0.2}), 1.0) == 0.0);
}

TEST_CASE("gradient check is stable across step sizes") {
  const auto model = random_model(3, {3}, 12);
  const auto v = plain({0.4, -1.1, 0.7});
  const double a = gradient_check(model, v, 0.6, 1e-4);
  const double b = gradient_check(model, v, 0.6, 1e-6);
  CHECK(a < 1e-4);
  CHECK(b < 1e-4);
  const double floor = 1e-12;
  CHECK(std::max(a, floor) / std::max(b, floor) < 10.0 + 1e6 * (a < 1e-9 || b < 1e-9));
}

TEST_CASE("feature assembly lays out blocks and imputes years") {
  EmbeddingVector emb{Eigen::VectorXd::LinSpaced(256, 0, 1), false};
  const std::vector<double> encoded(9, 0.9);
  YearImputer imp{2001.5, 2006.0};
  const auto v = assemble_features(emb, encoded, 1999, 2004, imp);
  CHECK(v.values.size() == 267);
  CHECK(v.blocks == BlockSizes{256, 9, 2});
  CHECK(v.values[265] == 1999);
  CHECK(v.values[266] == 2004);
  const auto m = assemble_features(emb, encoded, std::nullopt, std::nullopt, imp);
  CHECK(m.values[265] == 2001.5);
  CHECK(m.values[266] == 2006.0);
  CHECK(assemble_features(emb, encoded, 1999, 2004, imp).values == v.values);
  CHECK_THROWS_AS(assemble_features(emb, encoded, 1999, 2004, imp, BlockSizes{256, 8, 2}), DomainError);
}

TEST_CASE("year imputer uses training means of present years") {
  std::vector<ScenarioRecord> rs = {testing::record("a", "x", 1, {}, 2000, 2004),
                                    testing::record("b", "x", 1, {}, 2010, std::nullopt),
                                    testing::record("c", "x", 1)};
  const auto imp = YearImputer::fit(rs);
  CHECK(imp.start_mean == doctest::Approx(2005));
  CHECK(imp.end_mean == doctest::Approx(2004));
  const auto back = YearImputer::from_json(imp.to_json());
  CHECK(back.start_mean == imp.start_mean);
}

TEST_CASE("learns a linear target on a small fixture") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 50; ++i) {
    const double a = u(rng), b = u(rng);
    xs.push_back(plain({a, b}));
    ys.push_back(1.0 + 0.3 * a - 0.2 * b);
  }
  const auto result = train(xs, ys, quick({16, 8}, 1500));
  double mae = 0;
  for (int i = 0; i < 50; ++i) mae += std::fabs(result.model.predict(xs[i]) - ys[i]);
  CHECK(mae / 50 <= 0.02);
}

TEST_CASE("memorizes a repeated sample") {
  std::vector<FeatureVector> xs(100, plain({0.4, -0.3, 1.2}));
  std::vector<double> ys(100, 0.7);
  const auto result = train(xs, ys, quick({4}, 200));
  CHECK(std::fabs(result.model.predict(xs[0]) - 0.7) < 0.01);
}

TEST_CASE("training is deterministic for a seed") {
  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 40; ++i) {
    xs.push_back(plain({i * 0.1, std::sin(i)}));
    ys.push_back(0.8 + 0.01 * i);
  }
  auto cfg = quick({8, 4}, 50);
  cfg.validation_fraction = 0.5;
  const auto a = train(xs, ys, cfg);
  const auto b = train(xs, ys, cfg);
  CHECK(std::fabs(a.final_loss - b.final_loss) < 1e-9);
  CHECK(a.model.parameters() == b.model.parameters());
}

TEST_CASE("training loss settles on a smooth toy problem") {
  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 64; ++i) {
    const double a = (i % 8) / 8.0, b = (i / 8) / 8.0;
    xs.push_back(plain({a, b}));
    ys.push_back(2.0 * sigmoid(0.5 * a - 0.25 * b));
  }
  const auto result = train(xs, ys, quick({4}, 150));
  const auto& loss = result.epoch_loss;
  REQUIRE(loss.size() >= 20);
  for (std::size_t e = 10; e < loss.size(); ++e) CHECK(loss[e] <= loss[e - 1] * 1.05 + 1e-3 * loss.front());
  CHECK(loss.back() < loss.front());
}

TEST_CASE("invalid training inputs are reported") {
  std::vector<FeatureVector> xs = {plain({1, 2}), plain({1, NAN})};
  std::vector<double> ys = {0.9, 0.9};
  try {
    train(xs, ys, quick({2}, 1));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("feature vector 1") != std::string::npos);
    CHECK(msg.find("coordinate 1") != std::string::npos);
  }
  CHECK_THROWS_AS(train({plain({1, 2})}, {2.5}, quick({2}, 1)), DomainError);
  CHECK_THROWS_AS(train({}, {}, quick({2}, 1)), Error);
  CHECK_THROWS_AS(train({plain({1, 2})}, {1.0, 1.0}, quick({2}, 1)), Error);
}

TEST_CASE("model artifacts round trip") {
  testing::TempDir dir;
  const auto model = random_model(6, {5, 3}, 21);
  model.save(dir / "m");
  const auto back = MLPModel::load(dir / "m");
  const auto v = plain({0.1, 0.2, 0.3, -0.4, 0.5, 0.6});
  CHECK(back.predict(v) == model.predict(v));
  CHECK(back.hidden_widths() == std::vector<std::size_t>{5, 3});
  CHECK(back.blocks() == model.blocks());
  std::filesystem::resize_file(dir / "m" / "weights.bin", 16);
  CHECK_THROWS_AS(MLPModel::load(dir / "m"), ArtifactError);
}
