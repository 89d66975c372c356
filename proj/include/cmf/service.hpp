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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmf/pipeline.hpp"

namespace cmf::service {

// Carries the HTTP status the failure maps to (400, 404, 413).
class RequestError : public Error {
 public:
  RequestError(int status, const std::string& message) : Error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct PredictionRequest {
  Facility facility = Facility::kRoadway;
  std::string countermeasure_name;
  std::map<std::string, std::optional<std::string>> context;
  std::optional<int> start_year;
  std::optional<int> end_year;

  nlohmann::json to_json() const;
};

struct PredictionResponse {
  double cmf_hat = 1.0;
  std::string nature;  // reduction | increase | neutral
  std::string pseudo_sentence_echo;
  std::string model_version;

  nlohmann::json to_json() const;
};

// < 1 reduction, > 1 increase, exactly 1 neutral.
std::string nature_of(double cmf_hat);

// Field-level validation; `where` prefixes messages (e.g. "requests[2]").
// Context keys must be modeled fields of the facility (countermeasure name
// and years have their own request fields). Throws RequestError(400).
PredictionRequest parse_request(const nlohmann::json& j, const std::string& where = "");

ScenarioRecord to_record(const PredictionRequest& request);

// Loaded bundles, one per facility.
class Predictor {
 public:
  void add(ModelBundle bundle);
  // `dir` is either a bundle directory or a directory whose roadway/ and/or
  // intersection/ subdirectories are bundles. Throws ArtifactError when none
  // load.
  static Predictor load(const std::filesystem::path& dir);

  bool has(Facility facility) const { return bundles_.count(facility) > 0; }
  const ModelBundle& bundle(Facility facility) const;  // throws RequestError(404)
  PredictionResponse predict(const PredictionRequest& request) const;
  std::string model_version() const;
  nlohmann::json model_info() const;

 private:
  std::map<Facility, ModelBundle> bundles_;
};

struct ServiceOptions {
  std::size_t batch_cap = 256;
};

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

// Request handling independent of the transport.
class Service {
 public:
  Service(std::shared_ptr<const Predictor> predictor, ServiceOptions options = {});

  HttpResult predict(const std::string& body) const;
  HttpResult predict_batch(const std::string& body) const;
  HttpResult model() const;
  HttpResult health() const;

 private:
  std::shared_ptr<const Predictor> predictor_;
  ServiceOptions options_;
};

// HTTP transport: POST /predict, POST /predict/batch, GET /model, GET /health.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const Service> service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cmf::service
