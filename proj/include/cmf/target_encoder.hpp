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

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmf/schema.hpp"

namespace cmf {

// Reserved category under which missing cells are counted.
inline constexpr std::string_view kMissingCategory = "<MISSING>";

struct CategoryStats {
  double sum = 0.0;
  long count = 0;
};

// Smoothed mean encoding of categorical context fields:
//   d = lambda(n) * (category sum / n) + (1 - lambda(n)) * global mean,
//   lambda(n) = n / (n + l).
// Missing cells are an ordinary category; unseen categories have n = 0 and
// encode to the global mean.
class TargetEncoderState {
 public:
  TargetEncoderState() = default;

  // Throws Error on an empty dataset, an unknown feature name, or l <= 0.
  static TargetEncoderState fit(const Dataset& dataset, const std::vector<std::string>& features,
                                double smoothing = 100.0);
  static TargetEncoderState fit(const std::vector<ScenarioRecord>& records, Facility facility,
                                const std::vector<std::string>& features, double smoothing = 100.0);

  double encode_value(std::string_view feature, std::string_view category) const;
  std::vector<double> transform(const ScenarioRecord& record) const;

  const std::vector<std::string>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }
  double smoothing() const { return smoothing_; }
  double global_sum() const { return global_sum_; }
  long global_count() const { return global_count_; }
  double global_mean() const { return global_sum_ / static_cast<double>(global_count_); }
  const std::map<std::string, CategoryStats>& categories(std::string_view feature) const;

  // {"features": [...], "stats": {feature: {category: {sum, count}}},
  //  "global_sum", "global_count", "l"}
  nlohmann::json to_json() const;
  static TargetEncoderState from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> features_;
  std::map<std::string, std::map<std::string, CategoryStats>, std::less<>> stats_;
  double global_sum_ = 0.0;
  long global_count_ = 0;
  double smoothing_ = 100.0;
};

}  // namespace cmf
