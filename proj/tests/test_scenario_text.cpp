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

#include <algorithm>
#include <random>

#include "cmf/scenario_text.hpp"
#include "support.hpp"

using namespace cmf;

namespace {

std::size_t count_separators(const std::string& s) {
  std::size_t n = 0;
  for (std::size_t pos = s.find(", "); pos != std::string::npos; pos = s.find(", ", pos + 2)) ++n;
  return n;
}

}  // namespace

TEST_CASE("values are joined in schema order") {
  const auto r = testing::record("1", "Widen paved shoulder from 3 ft to 4 ft", 0.9,
                                 {{"area_type", "Rural"}, {"countermeasure_category", "Shoulder treatments"}});
  const auto s = build_pseudo_sentence(r, FieldSchema::for_facility(Facility::kRoadway));
  CHECK(s.text == "Widen paved shoulder from 3 ft to 4 ft, Shoulder treatments, Rural");
  CHECK(s.field_count == 3);
  CHECK(s.source_id == "1");
}

TEST_CASE("a record with no context renders as its name") {
  const auto r = testing::record("1", "Install median barrier", 0.9);
  const auto s = build_pseudo_sentence(r, FieldSchema::for_facility(Facility::kRoadway));
  CHECK(s.text == "Install median barrier");
  CHECK(s.field_count == 1);
}

TEST_CASE("six present fields give five separators") {
  const auto r = testing::record("1", "Add lighting", 0.9,
                                 {{"countermeasure_category", "Lighting"},
                                  {"crash_type", "Angle"},
                                  {"crash_time_of_day", "Nighttime"},
                                  {"area_type", "Urban"},
                                  {"roadway_type", "Collector"}});
  const auto s = build_pseudo_sentence(r, FieldSchema::for_facility(Facility::kRoadway));
  CHECK(s.field_count == 6);
  CHECK(count_separators(s.text) == 5);
}

TEST_CASE("years render as a span only when both are present") {
  const auto schema = FieldSchema::for_facility(Facility::kRoadway);
  CHECK(build_pseudo_sentence(testing::record("1", "X", 1, {}, 2001, 2005), schema).text == "X, from 2001 to 2005");
  CHECK(build_pseudo_sentence(testing::record("1", "X", 1, {}, 2001, std::nullopt), schema).text == "X");
}

TEST_CASE("commas and newlines inside values are neutralized") {
  const auto r = testing::record("1", "Install rumble strips, centerline", 0.9, {{"area_type", "Rural\nflat"}});
  const auto s = build_pseudo_sentence(r, FieldSchema::for_facility(Facility::kRoadway));
  CHECK(s.text == "Install rumble strips; centerline, Rural flat");
  CHECK(s.text.find('\n') == std::string::npos);
}

TEST_CASE("field-name rendering switch") {
  auto schema = FieldSchema::for_facility(Facility::kRoadway);
  schema.render_field_names = true;
  const auto s = build_pseudo_sentence(testing::record("1", "X", 1, {{"area_type", "Rural"}}), schema);
  CHECK(s.text == "countermeasure_name: X, area_type: Rural");
}

TEST_CASE("facility mismatch is a schema error") {
  const auto r = testing::record("1", "X", 1, {}, {}, {}, Facility::kIntersection);
  CHECK_THROWS_AS(build_pseudo_sentence(r, FieldSchema::for_facility(Facility::kRoadway)), SchemaError);
}

TEST_CASE("canonical order ends with the facility block") {
  const auto road = canonical_field_order(Facility::kRoadway);
  REQUIRE(road.size() >= 4);
  CHECK(std::vector<std::string>(road.end() - 4, road.end()) ==
        std::vector<std::string>{"roadway_type", "road_division_type", "number_of_lanes", "roadway_prior_condition"});
  const auto inter = canonical_field_order(Facility::kIntersection);
  CHECK(std::vector<std::string>(inter.end() - 4, inter.end()) ==
        std::vector<std::string>{"intersection_type", "intersection_geometry", "traffic_control_type",
                                 "intersection_prior_condition"});
  CHECK(canonical_field_order(Facility::kRoadway) == road);
  CHECK(canonical_field_order("intersection") == inter);
  CHECK_THROWS_AS(canonical_field_order("bridge"), SchemaError);
}

TEST_CASE("schema field lists are disjoint and cover the modeled fields") {
  for (Facility f : {Facility::kRoadway, Facility::kIntersection}) {
    const auto s = FieldSchema::for_facility(f);
    std::vector<std::string> all;
    all.insert(all.end(), s.text_fields.begin(), s.text_fields.end());
    all.insert(all.end(), s.categorical_fields.begin(), s.categorical_fields.end());
    all.insert(all.end(), s.numeric_fields.begin(), s.numeric_fields.end());
    auto sorted = all;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK(all.size() == s.sentence_order.size());
    CHECK(std::find(all.begin(), all.end(), "cmf") == all.end());
  }
}

TEST_CASE("property: sentences are injective on present fields") {
  std::mt19937_64 rng(3);
  const auto schema = FieldSchema::for_facility(Facility::kRoadway);
  const std::vector<std::string> values = {"A", "B", "C"};
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    auto make = [&] {
      std::map<std::string, std::string> ctx;
      for (const auto& f : schema.categorical_fields) {
        const int v = pick(rng);
        if (v < 3) ctx[f] = f + "-" + values[v];
      }
      return testing::record("1", "N" + std::to_string(pick(rng)), 1, ctx);
    };
    const auto a = make();
    const auto b = make();
    const bool same = a.context == b.context && a.countermeasure_name == b.countermeasure_name;
    CHECK((build_pseudo_sentence(a, schema).text == build_pseudo_sentence(b, schema).text) == same);
  }
}

TEST_CASE("property: insertion order of context does not matter") {
  const auto schema = FieldSchema::for_facility(Facility::kIntersection);
  std::vector<std::pair<std::string, std::string>> kv = {
      {"traffic_control_type", "Signalized"}, {"area_type", "Urban"}, {"crash_type", "Angle"},
      {"intersection_type", "Four-leg"}};
  const auto reference =
      build_pseudo_sentence(testing::record("1", "X", 1, {kv.begin(), kv.end()}, {}, {}, Facility::kIntersection),
                            schema);
  std::sort(kv.begin(), kv.end());
  do {
    cmf::ScenarioRecord r = testing::record("1", "X", 1, {}, {}, {}, Facility::kIntersection);
    for (const auto& [k, v] : kv) r.context.emplace(k, v);
    CHECK(build_pseudo_sentence(r, schema).text == reference.text);
  } while (std::next_permutation(kv.begin(), kv.end()));
}
