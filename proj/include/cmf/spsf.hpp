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

#include "cmf/schema.hpp"

namespace cmf {

// Safety performance similarity of two scenarios from their CMFs, in [-1, 1].
// delta = |a - b|. Pairs of opposite nature (one CMF below 1, the other above)
// with delta < 1 are penalized by (delta - 1)^2; otherwise cos(pi*delta/2).
// Sgn(0) = 0, so a CMF of exactly 1 never triggers the penalty.
// Throws DomainError for non-positive or non-finite CMFs.
double safety_similarity(double cmf_i, double cmf_j);

struct ScenarioPair {
  std::string left_id;
  std::string right_id;
  double gold_score = 0.0;
  double delta = 0.0;
};

nlohmann::json to_json(const ScenarioPair& pair);
ScenarioPair pair_from_json(const nlohmann::json& j);

struct PairSamplingOptions {
  bool stratify = true;
  int buckets = 8;                 // equal-width gold-score buckets over [-1, 1]
  std::size_t max_draws_factor = 200;  // rejection-sampling budget per requested pair
};

// Index of the gold-score bucket for `score` (equal-width over [-1, 1]).
int score_bucket(double score, int buckets);

// Distinct unordered pairs drawn from the dataset, each labeled with its
// safety similarity. Returns all pairs when `budget` meets or exceeds the
// number of distinct pairs. Stratified sampling fills each bucket up to
// budget/buckets by rejection; any shortfall from infeasible buckets is filled
// with uniform draws. Deterministic for a given seed.
std::vector<ScenarioPair> generate_training_pairs(const Dataset& dataset, std::size_t budget,
                                                  std::uint64_t seed,
                                                  const PairSamplingOptions& options = {});

void write_pairs_jsonl(const std::string& path, const std::vector<ScenarioPair>& pairs);
std::vector<ScenarioPair> read_pairs_jsonl(const std::string& path);

}  // namespace cmf
