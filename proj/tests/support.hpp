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

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>

#include "cmf/schema.hpp"

namespace testing {

inline cmf::ScenarioRecord record(std::string id, std::string name, double cmf,
                                  std::map<std::string, std::string> context = {},
                                  std::optional<int> start = std::nullopt, std::optional<int> end = std::nullopt,
                                  cmf::Facility facility = cmf::Facility::kRoadway) {
  cmf::ScenarioRecord r;
  r.id = std::move(id);
  r.facility = facility;
  r.countermeasure_name = std::move(name);
  r.context = std::move(context);
  r.start_year = start;
  r.end_year = end;
  r.cmf = cmf;
  return r;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cmfkit-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
