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

#include "cmf/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace cmf {
namespace {

constexpr std::string_view kBundleFormat = "cmfkit-bundle/1";

FieldSchema sentence_schema(Facility facility, bool render_field_names) {
  FieldSchema s = FieldSchema::for_facility(facility);
  s.render_field_names = render_field_names;
  return s;
}

}  // namespace

EncoderBackbone make_base_backbone(const PipelineConfig& config) {
  if (!config.backbone_dir.empty()) return load_backbone(config.backbone_dir);
  if (config.backbone_kind == "pretrained_transformer") {
    if (config.embedding_table.empty()) {
      throw Error("backbone.kind = pretrained_transformer needs backbone.table (precomputed embeddings)");
    }
    auto table = std::make_shared<EmbeddingTable>(EmbeddingTable::load(config.embedding_table));
    return EncoderBackbone::pretrained_transformer(config.checkpoint, std::move(table));
  }
  return EncoderBackbone::hashing(config.hashing);
}

std::vector<ScenarioPair> sample_pairs(const Dataset& data, const PipelineConfig& config) {
  const auto budget = static_cast<std::size_t>(
      std::max(1.0, config.pair_budget_factor * static_cast<double>(data.size())));
  PairSamplingOptions sampling;
  sampling.stratify = config.stratify_pairs;
  return generate_training_pairs(data, budget, config.seed, sampling);
}

FineTuneResult fine_tune_backbone(const EncoderBackbone& base, const Dataset& data,
                                  const std::vector<ScenarioPair>& pairs, const PipelineConfig& config) {
  const EncoderBackbone start =
      base.trainable()
          ? base
          : base.with_adapter(config.adapter_dimension ? config.adapter_dimension : base.base_dimension(),
                              config.seed);
  const FieldSchema schema = sentence_schema(data.facility(), config.render_field_names);
  SentenceMap sentences;
  for (const auto& r : data.records()) sentences.emplace(r.id, build_pseudo_sentence(r, schema));
  FineTuneConfig ft = config.finetune_config;
  ft.seed = config.seed;
  return fine_tune(start, pairs, sentences, ft);
}

CmfPipeline::CmfPipeline(PipelineConfig config, EncoderBackbone base, std::string name,
                         std::shared_ptr<SharedBackbone> shared)
    : config_(std::move(config)),
      base_(std::move(base)),
      backbone_(base_),
      name_(std::move(name)),
      shared_(std::move(shared)) {
  if (!base_.loaded()) throw Error("backbone not loaded");
  if (!config_.embedding_cache_dir.empty()) {
    disk_cache_ = std::make_unique<EmbeddingCache>(config_.embedding_cache_dir);
  }
}

std::vector<std::string> CmfPipeline::encoded_features(Facility facility) const {
  if (!config_.target_encoding) return {};
  if (!config_.te_features.empty()) return config_.te_features;
  return FieldSchema::for_facility(facility).categorical_fields;
}

void CmfPipeline::prepare(const Dataset& outer_train) {
  facility_ = outer_train.facility();
  {
    std::lock_guard lock(memo_mu_);
    memo_.clear();
  }
  fine_tune_.reset();
  if (!config_.finetune) {
    backbone_ = base_;
    prepared_ = true;
    return;
  }

  auto run = [&] {
    return fine_tune_backbone(base_, outer_train, sample_pairs(outer_train, config_), config_);
  };

  if (config_.finetune_once && shared_) {
    std::lock_guard lock(shared_->mu);
    if (!shared_->backbone) {
      fine_tune_ = run();
      shared_->backbone = fine_tune_->backbone;
    }
    backbone_ = *shared_->backbone;
  } else {
    fine_tune_ = run();
    backbone_ = fine_tune_->backbone;
  }
  prepared_ = true;
}

const Eigen::VectorXd& CmfPipeline::embedding(const std::string& text) const {
  std::lock_guard lock(memo_mu_);
  auto it = memo_.find(text);
  if (it != memo_.end()) return it->second;
  Eigen::VectorXd v = disk_cache_ ? disk_cache_->encode(backbone_, text).values : backbone_.encode(text).values;
  return memo_.emplace(text, std::move(v)).first->second;
}

FeatureVector CmfPipeline::features_for(const ScenarioRecord& record) const {
  const FieldSchema schema = sentence_schema(record.facility, config_.render_field_names);
  const PseudoSentence sentence = build_pseudo_sentence(record, schema);
  EmbeddingVector emb{embedding(sentence.text), false};
  std::vector<double> encoded;
  if (config_.target_encoding) encoded = te_state_.transform(record);
  return assemble_features(emb, encoded, record.start_year, record.end_year, imputer_);
}

void CmfPipeline::fit(const Dataset& train, const HyperParams& hp) {
  if (train.empty()) throw Error("cannot fit on an empty training set");
  if (!prepared_) prepare(train);
  if (config_.target_encoding) {
    te_state_ = TargetEncoderState::fit(train, encoded_features(train.facility()), config_.te_smoothing);
  }
  imputer_ = YearImputer::fit(train.records());
  std::vector<FeatureVector> features;
  std::vector<double> targets;
  features.reserve(train.size());
  for (const auto& r : train.records()) {
    features.push_back(features_for(r));
    targets.push_back(r.cmf);
  }
  TrainConfig tc = config_.train;
  tc.hidden = hp.hidden;
  tc.learning_rate = hp.learning_rate;
  tc.seed = config_.seed;
  train_result_ = cmf::train(features, targets, tc);
  model_ = train_result_.model;
  if (disk_cache_) disk_cache_->flush();
}

std::vector<double> CmfPipeline::predict(const Dataset& test) const {
  std::vector<double> out;
  out.reserve(test.size());
  for (const auto& r : test.records()) out.push_back(model_.predict(features_for(r)));
  return out;
}

void CmfPipeline::export_bundle(const std::filesystem::path& dir, const Dataset& training_data) const {
  std::filesystem::create_directories(dir);
  save_backbone(backbone_, dir / "backbone");
  model_.save(dir / "model");
  const nlohmann::json te = config_.target_encoding ? te_state_.to_json() : nlohmann::json(nullptr);
  std::ofstream(dir / "encoder_state.json") << te.dump(2) << "\n";

  nlohmann::json vocab = nlohmann::json::object();
  const FieldSchema schema = FieldSchema::for_facility(training_data.facility());
  for (const auto& f : schema.categorical_fields) {
    std::set<std::string> values;
    for (const auto& r : training_data.records()) {
      if (auto v = r.get(f)) values.insert(*v);
    }
    vocab[f] = values;
  }
  std::ifstream weights(dir / "model" / "manifest.json");
  const auto model_manifest = nlohmann::json::parse(weights);
  const std::string version =
      sha256_hex(backbone_.identifier() + model_manifest.at("weights_digest").get<std::string>() + te.dump())
          .substr(0, 12);

  nlohmann::json bundle{
      {"format", kBundleFormat},
      {"facility", std::string(to_string(training_data.facility()))},
      {"model_version", version},
      {"schema_version", schema.version},
      {"features", encoded_features(training_data.facility())},
      {"target_encoding", config_.target_encoding},
      {"imputer", imputer_.to_json()},
      {"render_field_names", config_.render_field_names},
      {"vocabulary", vocab},
      {"context_fields", schema.sentence_order},
      {"backbone", {{"kind", std::string(to_string(backbone_.kind()))},
                    {"identifier", backbone_.identifier()},
                    {"dimension", backbone_.dimension()}}},
      {"training_records", training_data.size()},
      {"output_scaling", "cmf_hat = 2 * sigmoid(z)"},
  };
  std::ofstream(dir / "bundle.json") << bundle.dump(2) << "\n";
}

ModelBundle ModelBundle::load(const std::filesystem::path& dir) {
  std::ifstream is(dir / "bundle.json");
  if (!is) throw ArtifactError("no bundle.json in " + dir.string() + "; run `cmfkit train` first");
  ModelBundle b;
  try {
    b.metadata_ = nlohmann::json::parse(is);
    if (b.metadata_.at("format").get<std::string>() != kBundleFormat) {
      throw ArtifactError("unsupported bundle format in " + dir.string());
    }
    b.facility_ = parse_facility(b.metadata_.at("facility").get<std::string>());
    b.model_version_ = b.metadata_.at("model_version").get<std::string>();
    b.schema_ = sentence_schema(b.facility_, b.metadata_.value("render_field_names", false));
    b.imputer_ = YearImputer::from_json(b.metadata_.at("imputer"));
    b.model_ = MLPModel::load(dir / "model");
    b.backbone_ = load_backbone(dir / "backbone", b.model_.blocks().semantic);
    std::ifstream ts(dir / "encoder_state.json");
    if (!ts) throw ArtifactError("no encoder_state.json in " + dir.string());
    const auto te = nlohmann::json::parse(ts);
    if (!te.is_null()) b.te_state_ = TargetEncoderState::from_json(te);
    const std::size_t k = te.is_null() ? 0 : b.te_state_.size();
    if (k != b.model_.blocks().encoded) {
      throw ArtifactError("encoder state has " + std::to_string(k) + " features, model expects " +
                          std::to_string(b.model_.blocks().encoded));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError("invalid bundle in " + dir.string() + ": " + e.what());
  }
  return b;
}

PseudoSentence ModelBundle::sentence(const ScenarioRecord& record) const {
  return build_pseudo_sentence(record, schema_);
}

FeatureVector ModelBundle::features(const ScenarioRecord& record) const {
  const PseudoSentence s = sentence(record);
  const EmbeddingVector emb = backbone_.encode(s);
  std::vector<double> encoded;
  if (model_.blocks().encoded > 0) encoded = te_state_.transform(record);
  return assemble_features(emb, encoded, record.start_year, record.end_year, imputer_, model_.blocks());
}

double ModelBundle::predict(const ScenarioRecord& record) const { return model_.predict(features(record)); }

}  // namespace cmf
