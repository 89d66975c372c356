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

#include "cmf/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace cmf::ingest {
namespace {

std::string_view trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<double> parse_decimal(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::optional<int> parse_year(std::string_view s) {
  s = trim(s);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

}  // namespace

ColumnMapping ColumnMapping::defaults() {
  ColumnMapping m;
  m.columns = {
      {"CMF ID", "id"},
      {"Facility Type", "facility"},
      {"Countermeasure", "countermeasure_name"},
      {"Category", "countermeasure_category"},
      {"Subcategory", "countermeasure_subcategory"},
      {"Crash Type", "crash_type"},
      {"Crash Time of Day", "crash_time_of_day"},
      {"Crash Severity", "crash_severity"},
      {"Area Type", "area_type"},
      {"Country", "country"},
      {"State", "state_city"},
      {"Start Year", "start_year"},
      {"End Year", "end_year"},
      {"Intersection Type", "intersection_type"},
      {"Intersection Geometry", "intersection_geometry"},
      {"Traffic Control", "traffic_control_type"},
      {"Intersection Prior Condition", "intersection_prior_condition"},
      {"Roadway Type", "roadway_type"},
      {"Road Division Type", "road_division_type"},
      {"Number of Lanes", "number_of_lanes"},
      {"Roadway Prior Condition", "roadway_prior_condition"},
      {"CMF", "cmf"},
      {"Star Quality Rating", "star_rating"},
  };
  m.facility_labels = {
      {"roadway", Facility::kRoadway},
      {"roadway segment", Facility::kRoadway},
      {"road segment", Facility::kRoadway},
      {"segment", Facility::kRoadway},
      {"intersection", Facility::kIntersection},
      {"intersections", Facility::kIntersection},
  };
  m.placeholders = FieldSchema{}.placeholders;
  return m;
}

ColumnMapping ColumnMapping::from_json(const nlohmann::json& j) {
  ColumnMapping m = defaults();
  try {
    if (j.contains("columns")) {
      m.columns = j.at("columns").get<std::map<std::string, std::string>>();
    }
    if (j.contains("facility_labels")) {
      m.facility_labels.clear();
      for (const auto& [label, facility] : j.at("facility_labels").items()) {
        m.facility_labels[lower(trim(label))] = parse_facility(facility.get<std::string>());
      }
    }
    if (j.contains("placeholders")) {
      m.placeholders = j.at("placeholders").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid column mapping: ") + e.what());
  }
  return m;
}

ColumnMapping ColumnMapping::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read column mapping " + path);
  try {
    return from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

nlohmann::json ColumnMapping::to_json() const {
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [label, facility] : facility_labels) labels[label] = std::string(to_string(facility));
  return {{"columns", columns}, {"facility_labels", labels}, {"placeholders", placeholders}};
}

std::string ColumnMapping::header_for(std::string_view schema_field) const {
  for (const auto& [header, f] : columns) {
    if (f == schema_field) return header;
  }
  return {};
}

std::vector<std::string> ColumnMapping::required_fields() const {
  return {std::string(field::kFacility), std::string(field::kCountermeasureName),
          std::string(field::kCmf)};
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string cell;
  bool in_quotes = false;
  bool after_quote = false;
  bool row_started = false;
  std::size_t line = 1;
  std::size_t quote_line = 0;
  row.line = 1;

  auto end_cell = [&] {
    row.cells.emplace_back(in_quotes || after_quote ? cell : std::string(trim(cell)));
    cell.clear();
    after_quote = false;
  };
  auto end_row = [&] {
    end_cell();
    const bool blank = row.cells.size() == 1 && row.cells[0].empty() && !row_started;
    if (!blank) rows.push_back(std::move(row));
    row = CsvRow{};
    row_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    if (c == ',') {
      row_started = true;
      end_cell();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
      ++line;
      row.line = line;
    } else if (c == '"') {
      if (!trim(cell).empty() || after_quote) {
        throw ParseError("line " + std::to_string(line) + ": stray quote inside unquoted field");
      }
      cell.clear();
      in_quotes = true;
      row_started = true;
      quote_line = line;
    } else if (after_quote) {
      if (c != ' ' && c != '\t') {
        throw ParseError("line " + std::to_string(line) +
                         ": unexpected character after closing quote");
      }
    } else {
      row_started = true;
      cell.push_back(c);
    }
  }
  if (in_quotes) {
    throw ParseError("line " + std::to_string(quote_line) + ": unterminated quoted field");
  }
  if (row_started || !cell.empty() || !row.cells.empty()) end_row();
  return rows;
}

std::vector<RawRecord> parse_clearinghouse_csv(std::string_view text, const ColumnMapping& mapping) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw SchemaError("CSV has no header row");
  const auto& header = rows.front().cells;

  std::vector<std::string> absent;
  for (const auto& f : mapping.required_fields()) {
    const std::string h = mapping.header_for(f);
    if (h.empty() || std::find(header.begin(), header.end(), h) == header.end()) {
      absent.push_back(h.empty() ? f : h);
    }
  }
  if (!absent.empty()) {
    std::string msg = "missing required columns:";
    for (const auto& a : absent) msg += " '" + a + "'";
    throw SchemaError(msg);
  }

  std::vector<RawRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r].cells;
    if (cells.size() > header.size()) {
      throw ParseError("line " + std::to_string(rows[r].line) + ": row has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    }
    RawRecord raw;
    raw.row = r;
    raw.line = rows[r].line;
    for (std::size_t c = 0; c < header.size(); ++c) {
      raw.cells[header[c]] = c < cells.size() ? cells[c] : std::string();
    }
    out.push_back(std::move(raw));
  }
  return out;
}

std::vector<RawRecord> load_clearinghouse_csv(const std::string& path, const ColumnMapping& mapping) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path + ": no such file");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_clearinghouse_csv(ss.str(), mapping);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

NormalizeResult normalize_record(const RawRecord& raw, const ColumnMapping& mapping) {
  auto cell = [&](std::string_view schema_field) -> std::optional<std::string> {
    const std::string header = mapping.header_for(schema_field);
    if (header.empty()) return std::nullopt;
    auto it = raw.cells.find(header);
    if (it == raw.cells.end()) return std::nullopt;
    return std::string(trim(it->second));
  };

  const std::string facility_label = lower(cell(field::kFacility).value_or(""));
  auto fit = mapping.facility_labels.find(facility_label);
  if (fit == mapping.facility_labels.end()) {
    return Rejection{raw.row, "bad_facility", "facility label '" + facility_label + "'"};
  }

  FieldSchema schema = FieldSchema::for_facility(fit->second);
  schema.placeholders = mapping.placeholders;
  auto present = [&](std::string_view f) -> std::optional<std::string> {
    auto v = cell(f);
    if (!v || schema.is_placeholder(*v)) return std::nullopt;
    return v;
  };

  ScenarioRecord rec;
  rec.facility = fit->second;

  const auto cmf_cell = cell(field::kCmf).value_or("");
  const auto cmf = parse_decimal(cmf_cell);
  if (!cmf) return Rejection{raw.row, "bad_target", "cmf '" + cmf_cell + "'"};
  rec.cmf = *cmf;

  auto name = present(field::kCountermeasureName);
  if (!name) return Rejection{raw.row, "missing_name", "empty countermeasure name"};
  rec.countermeasure_name = *name;

  auto id = present(field::kId);
  rec.id = id ? *id : "row-" + std::to_string(raw.row);

  for (const auto& f : schema.sentence_order) {
    if (f == field::kCountermeasureName || f == field::kStartYear || f == field::kEndYear) continue;
    if (auto v = present(f)) rec.context[f] = *v;
  }
  if (auto v = present(field::kStartYear)) rec.start_year = parse_year(*v);
  if (auto v = present(field::kEndYear)) rec.end_year = parse_year(*v);

  for (const auto& [header, f] : mapping.columns) {
    if (schema.has_field(f) || f == field::kId || f == field::kFacility) continue;
    if (auto v = present(f)) rec.extras[f] = *v;
  }
  return rec;
}

NormalizedBatch normalize_all(const std::vector<RawRecord>& raws, const ColumnMapping& mapping) {
  NormalizedBatch batch;
  std::set<std::string> seen;
  for (const auto& raw : raws) {
    auto result = normalize_record(raw, mapping);
    if (auto* rej = std::get_if<Rejection>(&result)) {
      batch.rejections.push_back(std::move(*rej));
      continue;
    }
    auto& rec = std::get<ScenarioRecord>(result);
    if (!seen.insert(rec.id).second) {
      std::clog << "ingest: duplicate id " << rec.id << " at row " << raw.row << " skipped\n";
      batch.rejections.push_back(Rejection{raw.row, "duplicate_id", "id " + rec.id});
      continue;
    }
    batch.records.push_back(std::move(rec));
  }
  return batch;
}

FilterResult filter_outliers(const std::vector<ScenarioRecord>& records, double cmf_max) {
  FilterResult out;
  for (const auto& r : records) {
    if (r.cmf > 0.0 && r.cmf <= cmf_max) {
      out.records.push_back(r);
    } else {
      ++out.removed;
    }
  }
  return out;
}

std::map<Facility, Dataset> split_by_facility(const std::vector<ScenarioRecord>& records) {
  std::map<Facility, Dataset> out;
  out.emplace(Facility::kRoadway, Dataset(Facility::kRoadway));
  out.emplace(Facility::kIntersection, Dataset(Facility::kIntersection));
  for (const auto& r : records) out.at(r.facility).add(r);
  return out;
}

std::vector<MissingRate> missing_rates(const Dataset& dataset) {
  std::vector<MissingRate> out;
  for (const auto& f : dataset.schema().sentence_order) {
    MissingRate mr{f, 0, dataset.size()};
    for (const auto& r : dataset.records()) {
      if (!r.get(f)) ++mr.missing;
    }
    out.push_back(mr);
  }
  return out;
}

nlohmann::json to_json(const Rejection& rejection) {
  return {{"row", rejection.row}, {"reason", rejection.reason}, {"detail", rejection.detail}};
}

}  // namespace cmf::ingest
