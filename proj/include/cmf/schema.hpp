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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmf/common.hpp"

namespace cmf {

// Schema field names. These are the normalized names every module uses; the
// clearinghouse header spellings are mapped onto them at ingest time.
namespace field {
inline constexpr std::string_view kId = "id";
inline constexpr std::string_view kFacility = "facility";
inline constexpr std::string_view kCountermeasureName = "countermeasure_name";
inline constexpr std::string_view kCategory = "countermeasure_category";
inline constexpr std::string_view kSubcategory = "countermeasure_subcategory";
inline constexpr std::string_view kCrashType = "crash_type";
inline constexpr std::string_view kCrashTimeOfDay = "crash_time_of_day";
inline constexpr std::string_view kCrashSeverity = "crash_severity";
inline constexpr std::string_view kAreaType = "area_type";
inline constexpr std::string_view kCountry = "country";
inline constexpr std::string_view kStateCity = "state_city";
inline constexpr std::string_view kStartYear = "start_year";
inline constexpr std::string_view kEndYear = "end_year";
inline constexpr std::string_view kIntersectionType = "intersection_type";
inline constexpr std::string_view kIntersectionGeometry = "intersection_geometry";
inline constexpr std::string_view kTrafficControlType = "traffic_control_type";
inline constexpr std::string_view kIntersectionPriorCondition = "intersection_prior_condition";
inline constexpr std::string_view kRoadwayType = "roadway_type";
inline constexpr std::string_view kRoadDivisionType = "road_division_type";
inline constexpr std::string_view kNumberOfLanes = "number_of_lanes";
inline constexpr std::string_view kRoadwayPriorCondition = "roadway_prior_condition";
inline constexpr std::string_view kCmf = "cmf";
}  // namespace field

// Per-facility field layout. The ordering of `sentence_order` is part of the
// versioned schema: it defines pseudo-sentence layout.
struct FieldSchema {
  Facility facility = Facility::kRoadway;
  std::string version = "cmf-fields/1";
  std::vector<std::string> text_fields;         // semantic channel only
  std::vector<std::string> categorical_fields;  // semantic + target-encoded
  std::vector<std::string> numeric_fields;      // start_year, end_year
  std::string target_field = std::string(field::kCmf);
  std::vector<std::string> sentence_order;      // every modeled field, in render order
  std::vector<std::string> placeholders = {"", "n/a", "-", "unspecified", "not specified"};
  bool render_field_names = false;

  static FieldSchema for_facility(Facility facility);

  // Case-insensitive match against the placeholder vocabulary.
  bool is_placeholder(std::string_view cell) const;
  bool has_field(std::string_view name) const;
  std::vector<std::string> modeled_fields() const;
};

// One CMF study row after normalization. `context` holds only present values;
// an absent key means the cell was missing in the export.
struct ScenarioRecord {
  std::string id;
  Facility facility = Facility::kRoadway;
  std::string countermeasure_name;
  std::map<std::string, std::string> context;
  std::optional<int> start_year;
  std::optional<int> end_year;
  double cmf = 1.0;
  std::map<std::string, std::string> extras;  // ingested but never modeled

  std::optional<std::string> get(std::string_view name) const;
  std::string category() const;
};

nlohmann::json to_json(const ScenarioRecord& record);
ScenarioRecord record_from_json(const nlohmann::json& j);

class Dataset {
 public:
  explicit Dataset(Facility facility);
  Dataset(Facility facility, std::vector<ScenarioRecord> records);

  Facility facility() const { return facility_; }
  const FieldSchema& schema() const { return schema_; }
  const std::vector<ScenarioRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Throws SchemaError on facility mismatch or duplicate id.
  void add(ScenarioRecord record);

  Dataset subset(const std::vector<std::size_t>& indices) const;

 private:
  Facility facility_;
  FieldSchema schema_;
  std::vector<ScenarioRecord> records_;
  std::map<std::string, std::size_t> index_;
};

void write_jsonl(const std::string& path, const std::vector<ScenarioRecord>& records);
Dataset read_dataset_jsonl(const std::string& path, Facility facility);

}  // namespace cmf
