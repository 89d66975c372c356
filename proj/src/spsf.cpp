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

#include "cmf/spsf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <unordered_set>

namespace cmf {
namespace {

int sgn(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

double safety_similarity(double cmf_i, double cmf_j) {
  if (!(cmf_i > 0.0) || !(cmf_j > 0.0) || !std::isfinite(cmf_i) || !std::isfinite(cmf_j)) {
    throw DomainError("safety_similarity requires positive finite CMFs");
  }
  const double delta = std::abs(cmf_i - cmf_j);
  const double regular = std::cos(std::numbers::pi / 2.0 * delta);
  const double signed_delta = sgn(cmf_i - 1.0) * sgn(cmf_j - 1.0) * delta;
  double value = regular;
  if (signed_delta > -1.0 && signed_delta < 0.0) value = regular * (delta - 1.0) * (delta - 1.0);
  return std::clamp(value, -1.0, 1.0);
}

nlohmann::json to_json(const ScenarioPair& p) {
  return {{"left_id", p.left_id}, {"right_id", p.right_id}, {"gold_score", p.gold_score},
          {"delta", p.delta}};
}

ScenarioPair pair_from_json(const nlohmann::json& j) {
  try {
    ScenarioPair p;
    p.left_id = j.at("left_id").get<std::string>();
    p.right_id = j.at("right_id").get<std::string>();
    p.gold_score = j.at("gold_score").get<double>();
    p.delta = j.value("delta", 0.0);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid pair record: ") + e.what());
  }
}

int score_bucket(double score, int buckets) {
  const int b = static_cast<int>(std::floor((score + 1.0) / 2.0 * buckets));
  return std::clamp(b, 0, buckets - 1);
}

std::vector<ScenarioPair> generate_training_pairs(const Dataset& dataset, std::size_t budget,
                                                  std::uint64_t seed,
                                                  const PairSamplingOptions& options) {
  const auto& recs = dataset.records();
  const std::size_t n = recs.size();
  if (n < 2) throw Error("pair generation needs at least 2 records, got " + std::to_string(n));
  if (budget == 0) throw Error("pair budget must be at least 1");

  auto make = [&](std::size_t i, std::size_t j) {
    ScenarioPair p;
    p.left_id = recs[i].id;
    p.right_id = recs[j].id;
    p.delta = std::abs(recs[i].cmf - recs[j].cmf);
    p.gold_score = safety_similarity(recs[i].cmf, recs[j].cmf);
    return p;
  };

  const std::size_t distinct = n * (n - 1) / 2;
  std::vector<ScenarioPair> out;
  if (budget >= distinct) {
    out.reserve(distinct);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) out.push_back(make(i, j));
    return out;
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::unordered_set<std::uint64_t> used;
  auto draw = [&](std::size_t& i, std::size_t& j) {
    do {
      i = pick(rng);
      j = pick(rng);
    } while (i == j);
    if (i > j) std::swap(i, j);
    return static_cast<std::uint64_t>(i) * n + j;
  };

  out.reserve(budget);
  if (options.stratify && options.buckets > 1) {
    const auto k = static_cast<std::size_t>(options.buckets);
    std::vector<std::size_t> quota(k, budget / k);
    for (std::size_t b = 0; b < budget % k; ++b) ++quota[b];
    std::vector<std::size_t> filled(k, 0);
    const std::size_t max_draws = options.max_draws_factor * budget;
    for (std::size_t attempt = 0; attempt < max_draws && out.size() < budget; ++attempt) {
      std::size_t i = 0, j = 0;
      const auto key = draw(i, j);
      if (used.count(key)) continue;
      const int b = score_bucket(safety_similarity(recs[i].cmf, recs[j].cmf), options.buckets);
      if (filled[b] >= quota[b]) continue;
      ++filled[b];
      used.insert(key);
      out.push_back(make(i, j));
    }
  }
  while (out.size() < budget) {
    std::size_t i = 0, j = 0;
    const auto key = draw(i, j);
    if (!used.insert(key).second) continue;
    out.push_back(make(i, j));
  }
  return out;
}

void write_pairs_jsonl(const std::string& path, const std::vector<ScenarioPair>& pairs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path);
  for (const auto& p : pairs) os << to_json(p).dump() << '\n';
}

std::vector<ScenarioPair> read_pairs_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  std::vector<ScenarioPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(pair_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cmf
