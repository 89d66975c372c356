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

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmf/schema.hpp"

namespace cmf::ingest {

// Verbatim cells of one export row, keyed by the export's header text.
struct RawRecord {
  std::size_t row = 0;   // 1-based data row
  std::size_t line = 0;  // source line the row starts on
  std::map<std::string, std::string> cells;
};

// Maps clearinghouse header spellings onto schema field names. Loaded from a
// JSON file:
//   {"columns": {"<export header>": "<schema field>", ...},
//    "facility_labels": {"<label>": "roadway"|"intersection", ...},
//    "placeholders": ["", "N/A", ...]}
struct ColumnMapping {
  std::map<std::string, std::string> columns;
  std::map<std::string, Facility> facility_labels;  // keys stored lowercase
  std::vector<std::string> placeholders;

  static ColumnMapping defaults();
  static ColumnMapping from_json(const nlohmann::json& j);
  static ColumnMapping load(const std::string& path);
  nlohmann::json to_json() const;

  // Export header mapped to a schema field, or "" when unmapped.
  std::string header_for(std::string_view schema_field) const;
  std::vector<std::string> required_fields() const;
};

// RFC-4180 reader. Returns rows of cells (surrounding whitespace trimmed) with
// the line each row starts on. Throws ParseError naming the line of an
// unterminated quoted field.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};
std::vector<CsvRow> parse_csv(std::string_view text);

// Throws Error on a missing file, ParseError on malformed CSV, SchemaError
// listing every required column absent from the header.
std::vector<RawRecord> load_clearinghouse_csv(const std::string& path,
                                              const ColumnMapping& mapping = ColumnMapping::defaults());
std::vector<RawRecord> parse_clearinghouse_csv(std::string_view text,
                                               const ColumnMapping& mapping = ColumnMapping::defaults());

struct Rejection {
  std::size_t row = 0;
  std::string reason;  // bad_target, bad_facility, missing_name, duplicate_id
  std::string detail;
};

using NormalizeResult = std::variant<ScenarioRecord, Rejection>;

// Facility is read from the record's facility column; the matching FieldSchema
// decides which fields are kept.
NormalizeResult normalize_record(const RawRecord& raw, const ColumnMapping& mapping);

struct NormalizedBatch {
  std::vector<ScenarioRecord> records;
  std::vector<Rejection> rejections;
};

// Normalizes every row. Duplicate ids keep the first occurrence; later ones
// are logged as duplicate_id rejections.
NormalizedBatch normalize_all(const std::vector<RawRecord>& raws, const ColumnMapping& mapping);

struct FilterResult {
  std::vector<ScenarioRecord> records;
  std::size_t removed = 0;
};

// Keeps 0 < cmf <= cmf_max; order preserving.
FilterResult filter_outliers(const std::vector<ScenarioRecord>& records, double cmf_max = 2.0);

std::map<Facility, Dataset> split_by_facility(const std::vector<ScenarioRecord>& records);

struct MissingRate {
  std::string field;
  std::size_t missing = 0;
  std::size_t total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(missing) / total; }
};

// Missing-value rate of every modeled field in the dataset's schema.
std::vector<MissingRate> missing_rates(const Dataset& dataset);

nlohmann::json to_json(const Rejection& rejection);

}  // namespace cmf::ingest
