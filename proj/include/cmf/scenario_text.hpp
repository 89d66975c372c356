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

#include <string>
#include <vector>

#include "cmf/schema.hpp"

namespace cmf {

struct PseudoSentence {
  std::string text;
  std::string source_id;
  int field_count = 0;
};

// Render order for a facility: countermeasure, crash, local area, time span,
// then the facility block.
std::vector<std::string> canonical_field_order(Facility facility);
std::vector<std::string> canonical_field_order(std::string_view facility);  // throws SchemaError

// Values joined by ", " in schema order. Missing fields are skipped; the two
// year fields render together as "from <start> to <end>" only when both are
// present. Commas inside values become ';' and newlines become spaces.
PseudoSentence build_pseudo_sentence(const ScenarioRecord& record, const FieldSchema& schema);

}  // namespace cmf
