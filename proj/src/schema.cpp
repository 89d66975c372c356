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

#include "cmf/schema.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace cmf {
namespace {

std::string lower_trimmed(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(begin, end - begin + 1));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

FieldSchema FieldSchema::for_facility(Facility facility) {
  using namespace field;
  FieldSchema s;
  s.facility = facility;
  s.numeric_fields = {std::string(kStartYear), std::string(kEndYear)};
  s.text_fields = {std::string(kCountermeasureName)};
  s.categorical_fields = {std::string(kCategory),      std::string(kSubcategory),
                          std::string(kCrashType),     std::string(kCrashTimeOfDay),
                          std::string(kCrashSeverity), std::string(kAreaType),
                          std::string(kCountry),       std::string(kStateCity)};
  s.sentence_order = {std::string(kCountermeasureName), std::string(kCategory),
                      std::string(kSubcategory),        std::string(kCrashType),
                      std::string(kCrashTimeOfDay),     std::string(kCrashSeverity),
                      std::string(kAreaType),           std::string(kCountry),
                      std::string(kStateCity),          std::string(kStartYear),
                      std::string(kEndYear)};
  std::vector<std::string> block_categorical;
  std::string prior;
  if (facility == Facility::kIntersection) {
    block_categorical = {std::string(kIntersectionType), std::string(kIntersectionGeometry),
                         std::string(kTrafficControlType)};
    prior = std::string(kIntersectionPriorCondition);
  } else {
    block_categorical = {std::string(kRoadwayType), std::string(kRoadDivisionType),
                         std::string(kNumberOfLanes)};
    prior = std::string(kRoadwayPriorCondition);
  }
  for (const auto& f : block_categorical) {
    s.categorical_fields.push_back(f);
    s.sentence_order.push_back(f);
  }
  s.text_fields.push_back(prior);
  s.sentence_order.push_back(prior);
  return s;
}

bool FieldSchema::is_placeholder(std::string_view cell) const {
  const std::string key = lower_trimmed(cell);
  return std::any_of(placeholders.begin(), placeholders.end(),
                     [&](const std::string& p) { return lower_trimmed(p) == key; });
}

bool FieldSchema::has_field(std::string_view name) const {
  auto in = [&](const std::vector<std::string>& v) {
    return std::find(v.begin(), v.end(), name) != v.end();
  };
  return in(text_fields) || in(categorical_fields) || in(numeric_fields) || name == target_field;
}

std::vector<std::string> FieldSchema::modeled_fields() const {
  std::vector<std::string> out = sentence_order;
  out.push_back(target_field);
  return out;
}

std::optional<std::string> ScenarioRecord::get(std::string_view name) const {
  if (name == field::kCountermeasureName) return countermeasure_name;
  if (name == field::kStartYear) {
    return start_year ? std::optional<std::string>(std::to_string(*start_year)) : std::nullopt;
  }
  if (name == field::kEndYear) {
    return end_year ? std::optional<std::string>(std::to_string(*end_year)) : std::nullopt;
  }
  auto it = context.find(std::string(name));
  if (it == context.end()) return std::nullopt;
  return it->second;
}

std::string ScenarioRecord::category() const {
  auto it = context.find(std::string(field::kCategory));
  return it == context.end() ? std::string() : it->second;
}

nlohmann::json to_json(const ScenarioRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["facility"] = std::string(to_string(r.facility));
  j["countermeasure_name"] = r.countermeasure_name;
  j["context"] = r.context;
  j["start_year"] = r.start_year ? nlohmann::json(*r.start_year) : nlohmann::json(nullptr);
  j["end_year"] = r.end_year ? nlohmann::json(*r.end_year) : nlohmann::json(nullptr);
  j["cmf"] = r.cmf;
  if (!r.extras.empty()) j["extras"] = r.extras;
  return j;
}

ScenarioRecord record_from_json(const nlohmann::json& j) {
  try {
    ScenarioRecord r;
    r.id = j.at("id").get<std::string>();
    r.facility = parse_facility(j.at("facility").get<std::string>());
    r.countermeasure_name = j.at("countermeasure_name").get<std::string>();
    if (j.contains("context")) {
      r.context = j.at("context").get<std::map<std::string, std::string>>();
    }
    if (j.contains("start_year") && !j["start_year"].is_null()) r.start_year = j["start_year"].get<int>();
    if (j.contains("end_year") && !j["end_year"].is_null()) r.end_year = j["end_year"].get<int>();
    r.cmf = j.at("cmf").get<double>();
    if (j.contains("extras")) r.extras = j["extras"].get<std::map<std::string, std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid scenario record: ") + e.what());
  }
}

Dataset::Dataset(Facility facility)
    : facility_(facility), schema_(FieldSchema::for_facility(facility)) {}

Dataset::Dataset(Facility facility, std::vector<ScenarioRecord> records) : Dataset(facility) {
  records_.reserve(records.size());
  for (auto& r : records) add(std::move(r));
}

void Dataset::add(ScenarioRecord record) {
  if (record.facility != facility_) {
    throw SchemaError("record " + record.id + " has facility " +
                      std::string(to_string(record.facility)) + ", dataset is " +
                      std::string(to_string(facility_)));
  }
  if (!index_.emplace(record.id, records_.size()).second) {
    throw SchemaError("duplicate record id " + record.id);
  }
  records_.push_back(std::move(record));
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out(facility_);
  out.schema_ = schema_;
  for (auto i : indices) out.add(records_.at(i));
  return out;
}

void write_jsonl(const std::string& path, const std::vector<ScenarioRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path);
  for (const auto& r : records) os << to_json(r).dump() << '\n';
}

Dataset read_dataset_jsonl(const std::string& path, Facility facility) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  Dataset ds(facility);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ds.add(record_from_json(j));
  }
  return ds;
}

}  // namespace cmf
