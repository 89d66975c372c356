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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmf/regressor.hpp"
#include "cmf/semantic_encoder.hpp"

namespace cmf {

// One point of the inner-CV hyperparameter grid.
struct HyperParams {
  std::vector<std::size_t> hidden = {64, 32};
  double learning_rate = 1e-3;

  std::string label() const;
  nlohmann::json to_json() const;
};

std::vector<HyperParams> default_grid();

// Resolved configuration for the pipeline, the evaluation harness and the
// CLI. Loaded from JSON (nested or flat dotted keys) or from a plain-text
// file of `key = value` lines; '#' starts a comment. Flat keys:
//
//   seed, folds, inner_folds, knn_k, selection_metric (mse|mae), threads
//   backbone.kind (hashing|pretrained_transformer), backbone.dir,
//   backbone.checkpoint, backbone.table
//   hashing.dimension, hashing.max_ngram, hashing.salt
//   finetune.enabled, finetune.once, finetune.adapter_dimension,
//   finetune.pair_budget_factor, finetune.stratify, finetune.epochs,
//   finetune.batch_size, finetune.learning_rate, finetune.validation_fraction
//   target_encoding.enabled, target_encoding.smoothing, target_encoding.features
//   train.epochs, train.batch_size, train.patience, train.validation_fraction,
//   train.hidden (e.g. "64,32"), train.learning_rate
//   grid (e.g. "32x16@1e-3; 64x32@3e-4"), embedding_cache.dir,
//   text.render_field_names
struct PipelineConfig {
  std::uint64_t seed = 42;
  int folds = 5;
  int inner_folds = 5;
  int knn_k = 10;
  std::string selection_metric = "mse";
  int threads = 1;

  std::string backbone_kind = "hashing";
  std::string backbone_dir;  // load a saved backbone instead of building one
  std::string checkpoint = "all-mpnet-base-v2";
  std::string embedding_table;  // precomputed transformer embeddings
  HashingConfig hashing;

  bool finetune = true;
  bool finetune_once = false;
  std::size_t adapter_dimension = 0;  // 0 = same as the base dimension
  double pair_budget_factor = 20.0;
  bool stratify_pairs = true;
  FineTuneConfig finetune_config{4, 32, 5e-3, 0, 0.1};

  bool target_encoding = true;
  double te_smoothing = 100.0;
  std::vector<std::string> te_features;  // empty = every categorical schema field

  TrainConfig train;
  std::vector<HyperParams> grid = default_grid();
  std::string embedding_cache_dir;
  bool render_field_names = false;

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig from_key_values(const std::string& text);
  static PipelineConfig load(const std::string& path);  // .json or key = value
  nlohmann::json to_json() const;
  std::string digest() const;

  void set(const std::string& key, const std::string& value);  // throws ParseError
};

std::vector<HyperParams> parse_grid(const std::string& text);

}  // namespace cmf
