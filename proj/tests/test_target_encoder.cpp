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

#include <doctest.h>

#include <cmath>
#include <random>

#include "cmf/target_encoder.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cmf;

namespace {

const std::string kArea = "area_type";

Dataset area_dataset(const std::vector<std::pair<std::optional<std::string>, double>>& rows) {
  Dataset ds(Facility::kRoadway);
  int i = 0;
  for (const auto& [area, y] : rows) {
    std::map<std::string, std::string> ctx;
    if (area) ctx[kArea] = *area;
    ds.add(testing::record("r" + std::to_string(i++), "x", y, ctx));
  }
  return ds;
}

}  // namespace

TEST_CASE("single record: category mean equals global mean equals its cmf") {
  const auto state = TargetEncoderState::fit(area_dataset({{"Rural", 0.73}}), {kArea});
  CHECK(state.global_mean() == doctest::Approx(0.73));
  CHECK(state.encode_value(kArea, "Rural") == doctest::Approx(0.73));
}

TEST_CASE("hand-computed sums and counts") {
  const auto state = TargetEncoderState::fit(area_dataset({{"A", 0.6}, {"A", 1.0}, {"B", 1.4}}), {kArea});
  const auto& cats = state.categories(kArea);
  CHECK(cats.at("A").count == 2);
  CHECK(cats.at("A").sum == doctest::Approx(1.6));
  CHECK(cats.at("B").count == 1);
  CHECK(state.global_mean() == doctest::Approx(1.0));
}

TEST_CASE("missing cells form their own category") {
  std::vector<std::pair<std::optional<std::string>, double>> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({i < 3 ? std::nullopt : std::optional<std::string>("Urban"), 0.9});
  const auto state = TargetEncoderState::fit(area_dataset(rows), {kArea});
  CHECK(state.categories(kArea).at(std::string(kMissingCategory)).count == 3);
  long total = 0;
  for (const auto& [c, s] : state.categories(kArea)) total += s.count;
  CHECK(total == 10);
}

TEST_CASE("smoothing weight example: n = l = 100 gives the midpoint") {
  // 100 rows of category A at 0.8 and 100 rows of B at 1.2: global mean 1.0.
  std::vector<std::pair<std::optional<std::string>, double>> rows;
  for (int i = 0; i < 100; ++i) rows.push_back({"A", 0.8});
  for (int i = 0; i < 100; ++i) rows.push_back({"B", 1.2});
  const auto state = TargetEncoderState::fit(area_dataset(rows), {kArea}, 100.0);
  CHECK(state.encode_value(kArea, "A") == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("large counts approach the category mean") {
  TargetEncoderState state = TargetEncoderState::from_json(nlohmann::json::parse(R"({
    "features": ["area_type"],
    "stats": {"area_type": {"Rural": {"sum": 700000.0, "count": 1000000}}},
    "global_sum": 1000000.0, "global_count": 1000000, "l": 100
  })"));
  CHECK(std::fabs(state.encode_value(kArea, "Rural") - 0.7) < 1e-3);
}

TEST_CASE("unseen categories encode to the global mean exactly") {
  const auto state = TargetEncoderState::fit(area_dataset({{"A", 0.6}, {"B", 1.3}, {"A", 0.7}}), {kArea});
  CHECK(state.encode_value(kArea, "Never seen") == state.global_mean());
  CHECK_THROWS_AS(state.encode_value("not_a_feature", "A"), Error);
}

TEST_CASE("transform: all-missing record and coordinate-wise agreement") {
  Dataset ds(Facility::kRoadway);
  ds.add(testing::record("a", "x", 0.8, {{"area_type", "Rural"}, {"crash_type", "Angle"}}));
  ds.add(testing::record("b", "x", 1.2, {{"area_type", "Urban"}}));
  ds.add(testing::record("c", "x", 1.0));
  const auto& cats = ds.schema().categorical_fields;
  const auto state = TargetEncoderState::fit(ds, cats);
  CHECK(state.size() == cats.size());

  const auto empty = state.transform(testing::record("z", "x", 1.0));
  REQUIRE(empty.size() == cats.size());
  for (std::size_t i = 0; i < cats.size(); ++i) {
    CHECK(empty[i] == state.encode_value(cats[i], kMissingCategory));
  }
  const auto& rec = ds.records()[0];
  const auto v = state.transform(rec);
  for (std::size_t i = 0; i < cats.size(); ++i) {
    CHECK(v[i] == state.encode_value(cats[i], rec.get(cats[i]).value_or(std::string(kMissingCategory))));
  }
}

TEST_CASE("vector width equals the configured features for both facilities") {
  for (Facility f : {Facility::kRoadway, Facility::kIntersection}) {
    Dataset ds(f);
    ds.add(testing::record("a", "x", 0.8, {}, {}, {}, f));
    const auto state = TargetEncoderState::fit(ds, ds.schema().categorical_fields);
    CHECK(state.transform(ds.records()[0]).size() == ds.schema().categorical_fields.size());
  }
}

TEST_CASE("fit argument validation") {
  CHECK_THROWS_AS(TargetEncoderState::fit(Dataset(Facility::kRoadway), {kArea}), Error);
  const auto ds = area_dataset({{"A", 1.0}});
  CHECK_THROWS_AS(TargetEncoderState::fit(ds, {"bogus"}), Error);
  CHECK_THROWS_AS(TargetEncoderState::fit(ds, {kArea}, 0.0), Error);
}

TEST_CASE("state survives a json round trip") {
  const auto state = TargetEncoderState::fit(area_dataset({{"A", 0.6}, {"B", 1.3}, {std::nullopt, 0.7}}), {kArea}, 25);
  const auto back = TargetEncoderState::from_json(state.to_json());
  for (const char* c : {"A", "B", "<MISSING>", "C"}) CHECK(back.encode_value(kArea, c) == state.encode_value(kArea, c));
  CHECK(back.smoothing() == 25);
}

TEST_CASE("property: oracle equivalence and blend bounds on random data") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 200)(rng);
    const int cats = std::uniform_int_distribution<int>(1, 10)(rng);
    const double l = std::uniform_real_distribution<double>(0.5, 150)(rng);
    std::vector<std::pair<std::optional<std::string>, double>> rows;
    for (int i = 0; i < n; ++i) {
      std::optional<std::string> c;
      if (std::uniform_real_distribution<double>(0, 1)(rng) > 0.2) {
        c = "c" + std::to_string(std::uniform_int_distribution<int>(0, cats - 1)(rng));
      }
      rows.push_back({c, std::uniform_real_distribution<double>(0.05, 2.0)(rng)});
    }
    const auto state = TargetEncoderState::fit(area_dataset(rows), {kArea}, l);
    for (int c = -1; c <= cats; ++c) {
      const std::string name = c < 0 ? std::string(kMissingCategory) : "c" + std::to_string(c);
      const double d = state.encode_value(kArea, name);
      CHECK(std::fabs(d - oracle::target_encoding(rows, name, l)) < 1e-12);
      auto it = state.categories(kArea).find(name);
      if (it != state.categories(kArea).end()) {
        const double cm = it->second.sum / it->second.count;
        CHECK(d >= std::min(cm, state.global_mean()) - 1e-12);
        CHECK(d <= std::max(cm, state.global_mean()) + 1e-12);
      }
    }
  }
}
