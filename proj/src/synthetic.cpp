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

#include "cmf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cmf/ingest.hpp"

namespace cmf::synthetic {
namespace {

const std::vector<std::string> kVerbs = {"Install", "Add", "Provide", "Upgrade"};
const std::vector<std::string> kPlaces = {"along horizontal curve", "on tangent section", "near ramp terminal",
                                          "at bridge approach",     "in work zone",       "on rural corridor",
                                          "on urban arterial",      "near school zone"};
const std::vector<std::string> kAreas = {"Rural", "Urban", "Suburban"};
const std::vector<std::string> kSeverities = {"Fatal", "Serious injury", "Minor injury", "Property damage only",
                                              "All"};
const std::vector<std::string> kCrashTypes = {"Run off road", "Head on", "Rear end", "Angle", "Sideswipe",
                                              "All"};
const std::vector<std::string> kTimes = {"Daytime", "Nighttime", "All"};
const std::vector<std::string> kCountries = {"United States", "Canada", "Australia"};
const std::vector<std::string> kStates = {"CA", "TX", "NC", "MN", "FL", "OH", "WA", "PA"};
const std::vector<std::string> kRoadwayTypes = {"Principal arterial", "Minor arterial", "Collector", "Local"};
const std::vector<std::string> kDivision = {"Divided", "Undivided"};
const std::vector<std::string> kLanes = {"2", "4", "6"};
const std::vector<std::string> kIntTypes = {"Four-leg", "Three-leg", "Roundabout"};
const std::vector<std::string> kGeometry = {"Skewed", "Perpendicular"};
const std::vector<std::string> kControl = {"Signalized", "Stop controlled", "Uncontrolled"};

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const std::vector<Treatment>& treatments() {
  static const std::vector<Treatment> kTreatments = {
      {"rumble", "Shoulder treatments", -0.26},   {"widening", "Shoulder treatments", -0.12},
      {"lighting", "Lighting", -0.20},            {"beacons", "Lighting", -0.04},
      {"barrier", "Roadside", -0.32},             {"guardrail", "Roadside", -0.16},
      {"narrowing", "Roadway", 0.14},             {"resurfacing", "Roadway", 0.04},
  };
  return kTreatments;
}

double area_effect(const std::string& area_type) {
  if (area_type == "Rural") return -0.05;
  if (area_type == "Urban") return 0.06;
  return 0.0;
}

double severity_effect(const std::string& severity) {
  if (severity == "Fatal") return -0.08;
  if (severity == "Serious injury") return -0.04;
  if (severity == "Property damage only") return 0.05;
  return 0.0;
}

double true_cmf(const ScenarioRecord& record) {
  double cmf = 1.0;
  std::string name = record.countermeasure_name;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto& t : treatments()) {
    if (name.find(t.token) != std::string::npos) {
      cmf += t.effect;
      break;
    }
  }
  cmf += area_effect(record.get(field::kAreaType).value_or(""));
  cmf += severity_effect(record.get(field::kCrashSeverity).value_or(""));
  return cmf;
}

std::vector<ScenarioRecord> generate(const Options& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, options.noise_sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  auto maybe = [&](ScenarioRecord& r, std::string_view f, const std::vector<std::string>& v) {
    const std::string value = pick(v);
    if (unit(rng) >= options.missing_rate) r.context[std::string(f)] = value;
  };

  std::vector<ScenarioRecord> out;
  out.reserve(options.records);
  for (std::size_t i = 0; i < options.records; ++i) {
    const auto& t = treatments()[std::uniform_int_distribution<std::size_t>(0, treatments().size() - 1)(rng)];
    ScenarioRecord r;
    r.id = "S" + std::to_string(100000 + i);
    r.facility = options.facility;
    r.countermeasure_name = pick(kVerbs) + " " + t.token + " " + pick(kPlaces);
    r.context[std::string(field::kCategory)] = t.category;
    r.context[std::string(field::kSubcategory)] = t.category + (unit(rng) < 0.5 ? " / general" : " / site specific");
    maybe(r, field::kCrashType, kCrashTypes);
    maybe(r, field::kCrashTimeOfDay, kTimes);
    maybe(r, field::kCrashSeverity, kSeverities);
    maybe(r, field::kAreaType, kAreas);
    maybe(r, field::kCountry, kCountries);
    maybe(r, field::kStateCity, kStates);
    if (options.facility == Facility::kRoadway) {
      maybe(r, field::kRoadwayType, kRoadwayTypes);
      maybe(r, field::kRoadDivisionType, kDivision);
      maybe(r, field::kNumberOfLanes, kLanes);
    } else {
      maybe(r, field::kIntersectionType, kIntTypes);
      maybe(r, field::kIntersectionGeometry, kGeometry);
      maybe(r, field::kTrafficControlType, kControl);
    }
    if (unit(rng) >= options.missing_rate) {
      const int start = std::uniform_int_distribution<int>(1985, 2012)(rng);
      r.start_year = start;
      r.end_year = start + std::uniform_int_distribution<int>(1, 8)(rng);
    }
    r.cmf = std::clamp(true_cmf(r) + noise(rng), 0.05, 2.0);
    r.cmf = std::round(r.cmf * 1e4) / 1e4;
    out.push_back(std::move(r));
  }
  return out;
}

std::string to_clearinghouse_csv(const std::vector<ScenarioRecord>& records) {
  const auto mapping = ingest::ColumnMapping::defaults();
  std::vector<std::pair<std::string, std::string>> cols;  // header, field
  for (const auto& [header, f] : mapping.columns) cols.emplace_back(header, f);
  std::ostringstream os;
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << csv_cell(cols[c].first);
  os << "\n";
  for (const auto& r : records) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& f = cols[c].second;
      std::string v;
      if (f == field::kId) v = r.id;
      else if (f == field::kFacility) v = r.facility == Facility::kRoadway ? "Roadway" : "Intersection";
      else if (f == field::kCmf) {
        std::ostringstream num;
        num.precision(6);
        num << r.cmf;
        v = num.str();
      } else if (auto x = r.get(f)) v = *x;
      else if (auto e = r.extras.find(f); e != r.extras.end()) v = e->second;
      os << (c ? "," : "") << csv_cell(v);
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace cmf::synthetic
