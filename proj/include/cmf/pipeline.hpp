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

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cmf/config.hpp"
#include "cmf/regressor.hpp"
#include "cmf/scenario_text.hpp"
#include "cmf/semantic_encoder.hpp"
#include "cmf/spsf.hpp"
#include "cmf/target_encoder.hpp"

namespace cmf {

// A trainable CMF predictor as seen by the evaluation harness. `prepare`
// learns the representation (embedding fine-tuning) once per outer fold;
// `fit` trains everything that depends on hyperparameters and may be called
// repeatedly on subsets of the prepared data.
class Pipeline {
 public:
  virtual ~Pipeline() = default;
  virtual std::string name() const = 0;
  virtual void prepare(const Dataset& /*outer_train*/) {}
  virtual void fit(const Dataset& train, const HyperParams& hp) = 0;
  virtual std::vector<double> predict(const Dataset& test) const = 0;
};

using PipelineFactory = std::function<std::unique_ptr<Pipeline>()>;

// Builds the configured base backbone (hashing, saved directory, or
// precomputed transformer table).
EncoderBackbone make_base_backbone(const PipelineConfig& config);

// Training pairs for `data` with a budget of pair_budget_factor x size.
std::vector<ScenarioPair> sample_pairs(const Dataset& data, const PipelineConfig& config);

// Fine-tunes an adapter over `base` (added when the base has none) on pairs
// whose ids refer to records of `data`.
FineTuneResult fine_tune_backbone(const EncoderBackbone& base, const Dataset& data,
                                  const std::vector<ScenarioPair>& pairs, const PipelineConfig& config);

// Shared slot for reusing a single fine-tuned backbone across outer folds.
struct SharedBackbone {
  std::mutex mu;
  std::optional<EncoderBackbone> backbone;
};

// Semantic embedding (optionally fine-tuned against SPSF pairs) fused with
// target-encoded context and standardized years, regressed by a logistic MLP.
class CmfPipeline : public Pipeline {
 public:
  CmfPipeline(PipelineConfig config, EncoderBackbone base, std::string name = "cmf-encoder",
              std::shared_ptr<SharedBackbone> shared = nullptr);

  std::string name() const override { return name_; }
  void prepare(const Dataset& outer_train) override;
  void fit(const Dataset& train, const HyperParams& hp) override;
  std::vector<double> predict(const Dataset& test) const override;

  const EncoderBackbone& backbone() const { return backbone_; }
  const TargetEncoderState& encoder_state() const { return te_state_; }
  const MLPModel& model() const { return model_; }
  const YearImputer& imputer() const { return imputer_; }
  const std::optional<FineTuneResult>& fine_tune_result() const { return fine_tune_; }
  const TrainResult& train_result() const { return train_result_; }
  std::vector<std::string> encoded_features(Facility facility) const;

  FeatureVector features_for(const ScenarioRecord& record) const;

  // Writes a self-contained serving bundle (see ModelBundle).
  void export_bundle(const std::filesystem::path& dir, const Dataset& training_data) const;

 private:
  const Eigen::VectorXd& embedding(const std::string& text) const;

  PipelineConfig config_;
  EncoderBackbone base_;
  EncoderBackbone backbone_;
  std::string name_;
  std::shared_ptr<SharedBackbone> shared_;
  bool prepared_ = false;
  Facility facility_ = Facility::kRoadway;
  std::optional<FineTuneResult> fine_tune_;
  TargetEncoderState te_state_;
  YearImputer imputer_;
  MLPModel model_;
  TrainResult train_result_;
  mutable std::mutex memo_mu_;
  mutable std::map<std::string, Eigen::VectorXd> memo_;
  mutable std::unique_ptr<EmbeddingCache> disk_cache_;
};

// Loaded serving bundle: backbone + target-encoder state + year imputer +
// MLP, plus the vocabulary of each encoded feature. Layout:
//   bundle.json   {format, facility, model_version, schema_version, features,
//                  imputer, render_field_names, vocabulary}
//   backbone/     save_backbone artifact
//   encoder_state.json
//   model/        MLPModel artifact
class ModelBundle {
 public:
  static ModelBundle load(const std::filesystem::path& dir);

  Facility facility() const { return facility_; }
  const std::string& model_version() const { return model_version_; }
  const EncoderBackbone& backbone() const { return backbone_; }
  const TargetEncoderState& encoder_state() const { return te_state_; }
  const MLPModel& model() const { return model_; }
  const FieldSchema& schema() const { return schema_; }
  const nlohmann::json& metadata() const { return metadata_; }

  PseudoSentence sentence(const ScenarioRecord& record) const;
  FeatureVector features(const ScenarioRecord& record) const;
  double predict(const ScenarioRecord& record) const;

 private:
  Facility facility_ = Facility::kRoadway;
  std::string model_version_;
  FieldSchema schema_;
  EncoderBackbone backbone_;
  TargetEncoderState te_state_;
  YearImputer imputer_;
  MLPModel model_;
  nlohmann::json metadata_;
};

}  // namespace cmf
