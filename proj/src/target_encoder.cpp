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

#include "cmf/target_encoder.hpp"

#include <cmath>

namespace cmf {

TargetEncoderState TargetEncoderState::fit(const Dataset& dataset,
                                           const std::vector<std::string>& features,
                                           double smoothing) {
  return fit(dataset.records(), dataset.facility(), features, smoothing);
}

TargetEncoderState TargetEncoderState::fit(const std::vector<ScenarioRecord>& records,
                                           Facility facility,
                                           const std::vector<std::string>& features,
                                           double smoothing) {
  if (records.empty()) throw Error("target encoder needs a non-empty training set");
  if (!(smoothing > 0.0)) throw Error("target encoder smoothing l must be positive");
  const FieldSchema schema = FieldSchema::for_facility(facility);
  TargetEncoderState state;
  state.smoothing_ = smoothing;
  state.features_ = features;
  for (const auto& f : features) {
    if (std::find(schema.categorical_fields.begin(), schema.categorical_fields.end(), f) ==
        schema.categorical_fields.end()) {
      throw Error("unknown categorical feature '" + f + "' for " +
                  std::string(to_string(facility)));
    }
    state.stats_[f];
  }
  for (const auto& r : records) {
    state.global_sum_ += r.cmf;
    ++state.global_count_;
    for (const auto& f : features) {
      auto v = r.get(f);
      auto& s = state.stats_[f][v ? *v : std::string(kMissingCategory)];
      s.sum += r.cmf;
      ++s.count;
    }
  }
  return state;
}

const std::map<std::string, CategoryStats>& TargetEncoderState::categories(std::string_view feature) const {
  auto it = stats_.find(feature);
  if (it == stats_.end()) throw Error("feature '" + std::string(feature) + "' not in encoder state");
  return it->second;
}

double TargetEncoderState::encode_value(std::string_view feature, std::string_view category) const {
  if (global_count_ == 0) throw Error("target encoder is not fitted");
  const double global = global_mean();
  const auto& cats = categories(feature);
  auto it = cats.find(std::string(category));
  if (it == cats.end()) return global;
  const double n = static_cast<double>(it->second.count);
  const double lambda = n / (n + smoothing_);
  return lambda * (it->second.sum / n) + (1.0 - lambda) * global;
}

std::vector<double> TargetEncoderState::transform(const ScenarioRecord& record) const {
  std::vector<double> out;
  out.reserve(features_.size());
  for (const auto& f : features_) {
    auto v = record.get(f);
    out.push_back(encode_value(f, v ? *v : kMissingCategory));
  }
  return out;
}

nlohmann::json TargetEncoderState::to_json() const {
  nlohmann::json stats = nlohmann::json::object();
  for (const auto& [f, cats] : stats_) {
    nlohmann::json jc = nlohmann::json::object();
    for (const auto& [c, s] : cats) jc[c] = {{"sum", s.sum}, {"count", s.count}};
    stats[f] = jc;
  }
  return {{"features", features_},
          {"stats", stats},
          {"global_sum", global_sum_},
          {"global_count", global_count_},
          {"l", smoothing_}};
}

TargetEncoderState TargetEncoderState::from_json(const nlohmann::json& j) {
  try {
    TargetEncoderState s;
    s.features_ = j.at("features").get<std::vector<std::string>>();
    for (const auto& f : s.features_) s.stats_[f];
    for (const auto& [f, cats] : j.at("stats").items()) {
      auto& m = s.stats_[f];
      for (const auto& [c, v] : cats.items()) {
        m[c] = CategoryStats{v.at("sum").get<double>(), v.at("count").get<long>()};
      }
    }
    s.global_sum_ = j.at("global_sum").get<double>();
    s.global_count_ = j.at("global_count").get<long>();
    s.smoothing_ = j.at("l").get<double>();
    if (s.global_count_ <= 0 || !(s.smoothing_ > 0.0)) throw ArtifactError("invalid encoder state counts");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("invalid target encoder state: ") + e.what());
  }
}

}  // namespace cmf
