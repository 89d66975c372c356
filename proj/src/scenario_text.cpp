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

#include "cmf/scenario_text.hpp"

namespace cmf {
namespace {

std::string sanitize(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    if (c == ',') {
      out.push_back(';');
    } else if (c == '\n' || c == '\r') {
      out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> canonical_field_order(Facility facility) {
  return FieldSchema::for_facility(facility).sentence_order;
}

std::vector<std::string> canonical_field_order(std::string_view facility) {
  return canonical_field_order(parse_facility(facility));
}

PseudoSentence build_pseudo_sentence(const ScenarioRecord& record, const FieldSchema& schema) {
  if (record.facility != schema.facility) {
    throw SchemaError("record " + record.id + " does not match the " +
                      std::string(to_string(schema.facility)) + " schema");
  }
  PseudoSentence out;
  out.source_id = record.id;
  auto append = [&](std::string_view name, const std::string& value) {
    if (!out.text.empty()) out.text += ", ";
    if (schema.render_field_names) {
      out.text += name;
      out.text += ": ";
    }
    out.text += sanitize(value);
    ++out.field_count;
  };

  for (const auto& f : schema.sentence_order) {
    if (f == field::kEndYear) continue;
    if (f == field::kStartYear) {
      if (record.start_year && record.end_year) {
        append("time_span", "from " + std::to_string(*record.start_year) + " to " +
                                std::to_string(*record.end_year));
      }
      continue;
    }
    if (auto v = record.get(f); v && !v->empty()) append(f, *v);
  }
  return out;
}

}  // namespace cmf
