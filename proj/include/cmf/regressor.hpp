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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cmf/schema.hpp"
#include "cmf/semantic_encoder.hpp"

namespace cmf {

struct BlockSizes {
  std::size_t semantic = 0;  // m
  std::size_t encoded = 0;   // k
  std::size_t years = 2;

  std::size_t total() const { return semantic + encoded + years; }
  bool operator==(const BlockSizes&) const = default;
};

// Fused model input: [semantic embedding; target encodings; start, end year].
struct FeatureVector {
  std::vector<double> values;
  BlockSizes blocks;
};

// Training-set means used to impute missing years.
struct YearImputer {
  double start_mean = 2000.0;
  double end_mean = 2000.0;

  static YearImputer fit(std::span<const ScenarioRecord> records);
  nlohmann::json to_json() const;
  static YearImputer from_json(const nlohmann::json& j);
};

// Throws DomainError when `expected` is given and the assembled block sizes
// differ from it.
FeatureVector assemble_features(const EmbeddingVector& embedding, std::span<const double> encoded,
                                std::optional<int> start_year, std::optional<int> end_year,
                                const YearImputer& imputer,
                                std::optional<BlockSizes> expected = std::nullopt);

struct TrainConfig {
  std::vector<std::size_t> hidden = {64, 32};
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int patience = 20;                  // epochs without validation improvement
  double validation_fraction = 0.1;   // early-stopping holdout; 0 disables
  std::size_t min_validation_size = 20;

  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Logistic MLP. Hidden layers apply sigma; the output unit is 2*sigma(z), so
// predictions lie strictly inside (0, 2). Inputs are standardized with
// statistics stored in the model.
class MLPModel {
 public:
  static constexpr double kOutputScale = 2.0;

  MLPModel() = default;
  MLPModel(std::vector<DenseLayer> layers, Eigen::VectorXd input_mean, Eigen::VectorXd input_scale,
           BlockSizes blocks, std::uint64_t seed = 0);

  std::size_t input_size() const { return static_cast<std::size_t>(input_mean_.size()); }
  const BlockSizes& blocks() const { return blocks_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<std::size_t> hidden_widths() const;
  const Eigen::VectorXd& input_mean() const { return input_mean_; }
  const Eigen::VectorXd& input_scale() const { return input_scale_; }
  std::uint64_t seed() const { return seed_; }

  double predict(const FeatureVector& v) const;  // throws DomainError on length mismatch
  double predict(std::span<const double> v) const;

  // Squared error (target - predict(v))^2 and its gradient with respect to
  // the flattened parameters (per layer: weight row-major, then bias).
  double loss(std::span<const double> v, double target) const;
  Eigen::VectorXd loss_gradient(std::span<const double> v, double target) const;
  Eigen::VectorXd parameters() const;
  MLPModel with_parameters(const Eigen::VectorXd& theta) const;

  // manifest.json + weights.bin (little-endian float64).
  void save(const std::filesystem::path& dir) const;
  static MLPModel load(const std::filesystem::path& dir);

 private:
  Eigen::VectorXd standardize(std::span<const double> v) const;

  std::vector<DenseLayer> layers_;
  Eigen::VectorXd input_mean_;
  Eigen::VectorXd input_scale_;
  BlockSizes blocks_;
  std::uint64_t seed_ = 0;
};

struct TrainResult {
  MLPModel model;
  std::vector<double> epoch_loss;       // training MSE after each epoch
  std::vector<double> validation_loss;  // empty when no holdout
  double final_loss = 0.0;              // MSE over all training samples
  int best_epoch = 0;
};

// Minimizes mean squared error with Adam. Deterministic for a given seed.
// Throws Error on empty or mismatched data, DomainError naming the sample and
// coordinate of any non-finite feature, and DomainError for targets outside
// (0, 2].
TrainResult train(const std::vector<FeatureVector>& features, const std::vector<double>& targets,
                  const TrainConfig& config);

// Max discrepancy between analytic and central-difference gradients of the
// squared loss. Per parameter: 0 when the absolute difference is within
// `absolute_floor`, otherwise |a - n| / max(|a|, |n|).
double gradient_check(const MLPModel& model, const FeatureVector& v, double target,
                      double step = 1e-5, double absolute_floor = 1e-7);

// Random small network for tests and checks.
MLPModel random_model(std::size_t inputs, const std::vector<std::size_t>& hidden, std::uint64_t seed,
                      double weight_scale = 0.5);

}  // namespace cmf
