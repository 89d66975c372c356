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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmf/config.hpp"
#include "cmf/pipeline.hpp"

namespace cmf {

// Per-fold metrics. All throw Error on empty input or mismatched lengths.
double mae(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);
// Fraction of pairs with (y - 1)(yhat - 1) >= 0.
double consistency_rate(std::span<const double> y, std::span<const double> yhat);
// Percentage of pairs with |y - yhat| < 0.05.
double pop(std::span<const double> y, std::span<const double> yhat);

struct FoldSplit {
  int k = 5;
  int inner_k = 5;
  std::uint64_t seed = 0;
  std::vector<int> outer;               // record index -> outer fold
  std::vector<std::vector<int>> inner;  // [outer fold][record index] -> inner fold, -1 if held out

  // Seeded uniform shuffle, then round-robin assignment; fold sizes differ
  // by at most one. Throws Error when n < k.
  static FoldSplit make(std::size_t n, int k, int inner_k, std::uint64_t seed);

  std::vector<std::size_t> outer_train(int fold) const;
  std::vector<std::size_t> outer_test(int fold) const;
  std::vector<std::size_t> inner_train(int fold, int inner_fold) const;
  std::vector<std::size_t> inner_test(int fold, int inner_fold) const;
};

struct FoldMetrics {
  int fold = 0;
  bool ok = false;
  std::string error;
  std::size_t n = 0;
  double mae = 0, rmse = 0, cr = 0, pop = 0;
  std::string selected;  // chosen hyperparameter label
};

struct PredictionRow {
  std::string id;
  double cmf = 0;
  double cmf_hat = 0;
  int fold = 0;
};

struct MetricsReport {
  std::string model;
  std::string facility;
  std::vector<FoldMetrics> folds;
  // Means over completed folds.
  double mae = 0, rmse = 0, cr = 0, pop = 0;
  std::vector<PredictionRow> predictions;
  std::string config_digest;
  std::string data_digest;
  std::vector<std::string> notes;

  bool complete() const;
  nlohmann::json to_json() const;
};

using FoldObserver =
    std::function<void(int fold, const Pipeline& pipeline, const Dataset& train, const Dataset& test)>;

struct NestedCvOptions {
  int k = 5;
  int inner_k = 5;
  std::uint64_t seed = 42;
  std::string selection_metric = "mse";  // or "mae"
  int threads = 1;
  FoldObserver observer;  // called after the outer-train refit, before test prediction
};

// Outer K-fold loop; inside each outer fold, a grid search by inner K-fold
// CV over the outer-train records, a refit with the winning point on the full
// outer-train set, and evaluation on the held-out fold. A fold whose pipeline
// throws is marked failed and excluded from the averages.
MetricsReport nested_cv(const Dataset& dataset, const PipelineFactory& factory,
                        const std::vector<HyperParams>& grid, const NestedCvOptions& options);

// Categorical fields compared by the non-encoding baseline: the countermeasure
// name, every categorical schema field, and start/end year in 5-year bins.
std::vector<std::string> knn_keys(const ScenarioRecord& record, const FieldSchema& schema);

// Mean CMF of the k nearest training records under Hamming distance over
// knn_keys (missing is its own value). Ties keep training order; k is capped
// at the training size.
std::vector<double> knn_baseline(const Dataset& train, const Dataset& test, int k = 10);

class KnnPipeline : public Pipeline {
 public:
  explicit KnnPipeline(int k = 10) : k_(k) {}
  std::string name() const override { return "non-encoding"; }
  void fit(const Dataset& train, const HyperParams&) override { train_ = train; }
  std::vector<double> predict(const Dataset& test) const override;

 private:
  int k_;
  std::optional<Dataset> train_;
};

// Always predicts a fixed value.
class ConstantPipeline : public Pipeline {
 public:
  explicit ConstantPipeline(double value = 1.0) : value_(value) {}
  std::string name() const override { return "constant"; }
  void fit(const Dataset&, const HyperParams&) override {}
  std::vector<double> predict(const Dataset& test) const override {
    return std::vector<double>(test.size(), value_);
  }

 private:
  double value_;
};

// Main model under the nested-CV harness.
MetricsReport evaluate_model(const Dataset& dataset, const PipelineConfig& config,
                             const EncoderBackbone& base, FoldObserver observer = {});
// Same harness with fine-tuning disabled; labeled "non-tuning".
MetricsReport pretrained_baseline(const Dataset& dataset, const EncoderBackbone& backbone,
                                  const PipelineConfig& config);
// Non-encoding 10-NN baseline under the same fold assignment.
MetricsReport knn_report(const Dataset& dataset, const PipelineConfig& config);

struct SubgroupRow {
  std::vector<std::string> group;
  std::size_t n = 0;
  double mae = 0, rmse = 0, cr = 0, pop = 0;
};

struct SubgroupReport {
  std::vector<std::string> keys;
  std::vector<SubgroupRow> rows;

  std::string to_csv() const;
  // Long-form cell data for a two-key grid plot: row, column, n, mae.
  std::string to_grid_csv() const;
};

// Pooled metrics of the prediction dump grouped by the given record fields
// (missing values grouped under "<MISSING>"). Throws Error on an unknown key.
SubgroupReport subgroup_report(const MetricsReport& report, const Dataset& dataset,
                               const std::vector<std::string>& keys);

using RecordPredicate = std::function<bool(const ScenarioRecord&)>;

// Shoulder-width countermeasures: name or category text mentions a shoulder
// together with its width.
bool is_shoulder_width_countermeasure(const ScenarioRecord& record);

struct CaseStudy {
  std::vector<PredictionRow> rows;
  std::string warning;

  std::string scatter_csv() const;  // id,cmf,cmf_hat
};

CaseStudy case_study_structured(const MetricsReport& report, const Dataset& dataset,
                                const RecordPredicate& filter = is_shoulder_width_countermeasure);

// Report bundle: metrics.json, predictions.jsonl, subgroups.csv, config.json.
void write_report_bundle(const std::filesystem::path& dir, const MetricsReport& report,
                         const SubgroupReport& subgroups, const nlohmann::json& config);

// Reads metrics.json and predictions.jsonl back. Throws ArtifactError when
// either is missing or malformed.
MetricsReport read_report_bundle(const std::filesystem::path& dir);

std::string dataset_digest(const Dataset& dataset);

}  // namespace cmf
