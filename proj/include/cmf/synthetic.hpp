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

#include "cmf/schema.hpp"

namespace cmf::synthetic {

// Generated scenarios whose true CMF is an additive function of one
// treatment token in the countermeasure name, the area type, and the crash
// severity, plus Gaussian noise. Every other context field is random.
struct Options {
  std::size_t records = 2000;
  double noise_sigma = 0.03;
  std::uint64_t seed = 1;
  Facility facility = Facility::kRoadway;
  double missing_rate = 0.15;
};

struct Treatment {
  std::string token;
  std::string category;
  double effect;
};

const std::vector<Treatment>& treatments();
double area_effect(const std::string& area_type);
double severity_effect(const std::string& severity);

// Noise-free CMF of a generated record.
double true_cmf(const ScenarioRecord& record);

std::vector<ScenarioRecord> generate(const Options& options);

// The same records laid out as a clearinghouse-style CSV export using the
// default column mapping headers.
std::string to_clearinghouse_csv(const std::vector<ScenarioRecord>& records);

}  // namespace cmf::synthetic
