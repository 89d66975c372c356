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
#include <fstream>
#include <set>

#include "cmf/ingest.hpp"
#include "support.hpp"

using namespace cmf;
using namespace cmf::ingest;

namespace {

const char* kHeader =
    "CMF ID,Facility Type,Countermeasure,Category,Crash Time of Day,Area Type,Start Year,End Year,CMF\n";

std::string fixture() {
  return std::string(kHeader) +
         "101,Roadway,\"Install rumble strips, centerline\",Shoulder treatments,Nighttime,Rural,2001,2005,0.37\n"
         "102,Intersection,Add left-turn lane,Turn lanes,,Urban,,,0.81\n"
         "103,Roadway,Widen paved shoulder from 3 ft to 4 ft,Shoulder treatments,N/A,  Rural ,1999,2003,1.12\n";
}

}  // namespace

TEST_CASE("csv reader handles quoting, escaped quotes and embedded newlines") {
  const auto rows = parse_csv("a,b,c\n\"x, y\",\"say \"\"hi\"\"\",\"two\nlines\"\n1,2,3");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].cells == std::vector<std::string>{"x, y", "say \"hi\"", "two\nlines"});
  CHECK(rows[2].line == 4);
  CHECK(rows[2].cells == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("csv reader strips a byte-order mark and accepts CRLF") {
  const auto rows = parse_csv("\xEF\xBB\xBF" "a,b\r\n1,2\r\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].cells[0] == "a");
  CHECK(rows[1].cells[1] == "2");
}

TEST_CASE("csv reader reports the line of an unterminated quote") {
  try {
    parse_csv("a,b\n1,2\n3,\"open\n4,5\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_csv("a,b\n1,x\"y\n"), ParseError);
}

TEST_CASE("header-only file yields no records") {
  CHECK(parse_clearinghouse_csv(kHeader).empty());
}

TEST_CASE("three-row fixture yields three raw records with verbatim cells") {
  const auto raws = parse_clearinghouse_csv(fixture());
  REQUIRE(raws.size() == 3);
  CHECK(raws[0].cells.at("Countermeasure") == "Install rumble strips, centerline");
  CHECK(raws[0].cells.at("CMF") == "0.37");
  CHECK(raws[1].cells.at("Crash Time of Day").empty());
  CHECK(raws[2].cells.at("Area Type") == "Rural");  // surrounding whitespace only
  CHECK(raws[2].row == 3);
}

TEST_CASE("missing required columns are listed together") {
  try {
    parse_clearinghouse_csv("CMF ID,Category\n1,x\n");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("Facility Type") != std::string::npos);
    CHECK(msg.find("Countermeasure") != std::string::npos);
    CHECK(msg.find("CMF") != std::string::npos);
  }
}

TEST_CASE("normalize_record applies empty-cell, placeholder and numeric rules") {
  const auto mapping = ColumnMapping::defaults();
  const auto raws = parse_clearinghouse_csv(fixture(), mapping);

  auto r0 = std::get<ScenarioRecord>(normalize_record(raws[0], mapping));
  CHECK(r0.cmf == doctest::Approx(0.37).epsilon(1e-15));
  CHECK(r0.id == "101");
  CHECK(r0.facility == Facility::kRoadway);
  CHECK(r0.start_year == 2001);
  CHECK(r0.get(field::kCrashTimeOfDay) == "Nighttime");

  auto r1 = std::get<ScenarioRecord>(normalize_record(raws[1], mapping));
  CHECK(r1.facility == Facility::kIntersection);
  CHECK_FALSE(r1.get(field::kCrashTimeOfDay).has_value());
  CHECK_FALSE(r1.start_year.has_value());

  auto r2 = std::get<ScenarioRecord>(normalize_record(raws[2], mapping));
  CHECK_FALSE(r2.get(field::kCrashTimeOfDay).has_value());  // "N/A" placeholder
}

TEST_CASE("unparseable target, unknown facility and empty name are rejected") {
  const auto mapping = ColumnMapping::defaults();
  const std::string text = std::string(kHeader) +
                           "1,Roadway,Thing,,,,,,abc\n"
                           "2,Freeway ramp,Thing,,,,,,0.9\n"
                           "3,Roadway,,,,,,,0.9\n"
                           "4,Roadway,Thing,,,,,,0.9x\n";
  const auto raws = parse_clearinghouse_csv(text, mapping);
  std::vector<std::string> reasons;
  for (const auto& raw : raws) reasons.push_back(std::get<Rejection>(normalize_record(raw, mapping)).reason);
  CHECK(reasons == std::vector<std::string>{"bad_target", "bad_facility", "missing_name", "bad_target"});
}

TEST_CASE("duplicate ids keep the first occurrence") {
  const auto mapping = ColumnMapping::defaults();
  const std::string text = std::string(kHeader) +
                           "7,Roadway,First,,,,,,0.9\n"
                           "7,Roadway,Second,,,,,,0.8\n";
  const auto batch = normalize_all(parse_clearinghouse_csv(text, mapping), mapping);
  REQUIRE(batch.records.size() == 1);
  CHECK(batch.records[0].countermeasure_name == "First");
  REQUIRE(batch.rejections.size() == 1);
  CHECK(batch.rejections[0].reason == "duplicate_id");
  CHECK(batch.rejections[0].row == 2);
}

TEST_CASE("rows without an id column are keyed by row index") {
  ColumnMapping mapping = ColumnMapping::defaults();
  const std::string text = "Facility Type,Countermeasure,CMF\nRoadway,A,0.9\nRoadway,B,0.8\n";
  const auto batch = normalize_all(parse_clearinghouse_csv(text, mapping), mapping);
  REQUIRE(batch.records.size() == 2);
  CHECK(batch.records[0].id != batch.records[1].id);
}

TEST_CASE("filter_outliers keeps 0 < cmf <= 2") {
  std::vector<ScenarioRecord> rs = {testing::record("a", "x", 0.5), testing::record("b", "x", 1.0),
                                    testing::record("c", "x", 2.01), testing::record("d", "x", 2.0),
                                    testing::record("e", "x", 2.5), testing::record("f", "x", 0.0)};
  const auto out = filter_outliers(rs);
  std::vector<std::string> ids;
  for (const auto& r : out.records) ids.push_back(r.id);
  CHECK(ids == std::vector<std::string>{"a", "b", "d"});
  CHECK(out.removed == 3);

  SUBCASE("idempotent and order preserving") {
    const auto again = filter_outliers(out.records);
    CHECK(again.removed == 0);
    REQUIRE(again.records.size() == out.records.size());
    for (std::size_t i = 0; i < again.records.size(); ++i) CHECK(again.records[i].id == out.records[i].id);
  }
}

TEST_CASE("split_by_facility partitions records") {
  std::vector<ScenarioRecord> rs;
  const std::vector<Facility> labels = {Facility::kRoadway,      Facility::kIntersection, Facility::kRoadway,
                                        Facility::kRoadway,      Facility::kIntersection, Facility::kIntersection,
                                        Facility::kRoadway,      Facility::kIntersection, Facility::kRoadway,
                                        Facility::kRoadway};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    rs.push_back(testing::record("r" + std::to_string(i), "x", 0.9, {}, {}, {}, labels[i]));
  }
  auto split = split_by_facility(rs);
  CHECK(split.at(Facility::kRoadway).size() == 6);
  CHECK(split.at(Facility::kIntersection).size() == 4);
  for (const auto& [f, ds] : split) {
    for (const auto& r : ds.records()) {
      const auto i = std::stoul(r.id.substr(1));
      CHECK(labels[i] == f);
    }
  }

  SUBCASE("all-roadway input leaves the intersection set empty") {
    std::vector<ScenarioRecord> only = {testing::record("a", "x", 0.9)};
    auto s = split_by_facility(only);
    CHECK((s.count(Facility::kIntersection) == 0 || s.at(Facility::kIntersection).empty()));
  }
}

TEST_CASE("load then normalize is deterministic") {
  testing::TempDir dir;
  std::ofstream(dir / "x.csv") << fixture();
  const auto mapping = ColumnMapping::defaults();
  const auto a = normalize_all(load_clearinghouse_csv((dir / "x.csv").string(), mapping), mapping);
  const auto b = normalize_all(load_clearinghouse_csv((dir / "x.csv").string(), mapping), mapping);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(to_json(a.records[i]) == to_json(b.records[i]));
}

TEST_CASE("jsonl round trip preserves records") {
  testing::TempDir dir;
  std::vector<ScenarioRecord> rs = {
      testing::record("a", "Install lighting", 0.8, {{"area_type", "Urban"}}, 2001, 2004),
      testing::record("b", "Add barrier", 1.1, {}, std::nullopt, 2010)};
  write_jsonl((dir / "d.jsonl").string(), rs);
  const auto ds = read_dataset_jsonl((dir / "d.jsonl").string(), Facility::kRoadway);
  REQUIRE(ds.size() == 2);
  CHECK(to_json(ds.records()[0]) == to_json(rs[0]));
  CHECK(to_json(ds.records()[1]) == to_json(rs[1]));
}

TEST_CASE("missing rates count absent cells per field") {
  Dataset ds(Facility::kRoadway);
  for (int i = 0; i < 10; ++i) {
    std::map<std::string, std::string> ctx;
    if (i >= 3) ctx["area_type"] = "Rural";
    ds.add(testing::record("r" + std::to_string(i), "x", 0.9, ctx));
  }
  for (const auto& m : missing_rates(ds)) {
    if (m.field == "area_type") {
      CHECK(m.missing == 3);
      CHECK(m.rate() == doctest::Approx(0.3));
    }
  }
}

TEST_CASE("column mapping loads from json") {
  const auto j = nlohmann::json::parse(R"({
    "columns": {"ID": "id", "Type": "facility", "Name": "countermeasure_name", "Value": "cmf"},
    "facility_labels": {"Road": "roadway"},
    "placeholders": ["", "?"]
  })");
  const auto mapping = ColumnMapping::from_json(j);
  const auto raws = parse_clearinghouse_csv("ID,Type,Name,Value\n9,road,Thing,0.7\n", mapping);
  const auto r = std::get<ScenarioRecord>(normalize_record(raws.at(0), mapping));
  CHECK(r.id == "9");
  CHECK(r.cmf == doctest::Approx(0.7));
  CHECK(mapping.header_for("cmf") == "Value");
}
