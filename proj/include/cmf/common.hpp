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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cmf {

// Error hierarchy. Everything thrown by the library derives from cmf::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CSV, JSON, config).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input is well formed but does not match the expected schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Saved artifact missing, corrupt, or inconsistent.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

enum class Facility { kRoadway, kIntersection };

std::string_view to_string(Facility facility);
Facility parse_facility(std::string_view name);  // throws SchemaError

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// 64-bit FNV-1a. Stable across processes and platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace cmf
