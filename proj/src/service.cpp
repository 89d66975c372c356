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

#include "cmf/service.hpp"

#include <algorithm>

#include <httplib.h>

namespace cmf::service {
namespace {

std::string at(const std::string& where, const std::string& field) {
  return where.empty() ? field : where + "." + field;
}

HttpResult error_result(int status, const std::string& message) {
  return HttpResult{status, {{"error", message}}};
}

}  // namespace

nlohmann::json PredictionRequest::to_json() const {
  nlohmann::json ctx = nlohmann::json::object();
  for (const auto& [k, v] : context) ctx[k] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  return {{"facility", std::string(cmf::to_string(facility))},
          {"countermeasure_name", countermeasure_name},
          {"context", ctx},
          {"start_year", start_year ? nlohmann::json(*start_year) : nlohmann::json(nullptr)},
          {"end_year", end_year ? nlohmann::json(*end_year) : nlohmann::json(nullptr)}};
}

nlohmann::json PredictionResponse::to_json() const {
  return {{"cmf_hat", cmf_hat},
          {"nature", nature},
          {"pseudo_sentence_echo", pseudo_sentence_echo},
          {"model_version", model_version}};
}

std::string nature_of(double cmf_hat) {
  if (cmf_hat < 1.0) return "reduction";
  if (cmf_hat > 1.0) return "increase";
  return "neutral";
}

PredictionRequest parse_request(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw RequestError(400, (where.empty() ? "request" : where) + ": expected a JSON object");
  static const std::vector<std::string> kTopLevel = {"facility",   "countermeasure_name", "context",
                                                     "start_year", "end_year",            "label"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(kTopLevel.begin(), kTopLevel.end(), k) == kTopLevel.end()) {
      throw RequestError(400, at(where, k) + ": unknown field");
    }
  }
  PredictionRequest req;
  if (!j.contains("facility") || !j["facility"].is_string()) {
    throw RequestError(400, at(where, "facility") + ": required string (roadway or intersection)");
  }
  try {
    req.facility = parse_facility(j["facility"].get<std::string>());
  } catch (const SchemaError& e) {
    throw RequestError(400, at(where, "facility") + ": " + e.what());
  }
  if (!j.contains("countermeasure_name") || !j["countermeasure_name"].is_string() ||
      j["countermeasure_name"].get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos) {
    throw RequestError(400, at(where, "countermeasure_name") + ": required non-empty string");
  }
  req.countermeasure_name = j["countermeasure_name"].get<std::string>();

  const FieldSchema schema = FieldSchema::for_facility(req.facility);
  if (j.contains("context") && !j["context"].is_null()) {
    if (!j["context"].is_object()) throw RequestError(400, at(where, "context") + ": expected an object");
    for (const auto& [k, v] : j["context"].items()) {
      const bool allowed = schema.has_field(k) && k != field::kCountermeasureName && k != field::kStartYear &&
                           k != field::kEndYear && k != field::kCmf;
      if (!allowed) {
        throw RequestError(400, at(where, "context." + k) + ": unknown field for " +
                                    std::string(cmf::to_string(req.facility)));
      }
      if (v.is_null()) {
        req.context[k] = std::nullopt;
      } else if (v.is_string()) {
        req.context[k] = v.get<std::string>();
      } else {
        throw RequestError(400, at(where, "context." + k) + ": expected a string or null");
      }
    }
  }
  for (const char* key : {"start_year", "end_year"}) {
    if (!j.contains(key) || j[key].is_null()) continue;
    if (!j[key].is_number_integer()) throw RequestError(400, at(where, key) + ": expected an integer or null");
    (std::string(key) == "start_year" ? req.start_year : req.end_year) = j[key].get<int>();
  }
  return req;
}

ScenarioRecord to_record(const PredictionRequest& request) {
  ScenarioRecord r;
  r.id = "request";
  r.facility = request.facility;
  r.countermeasure_name = request.countermeasure_name;
  const FieldSchema schema = FieldSchema::for_facility(request.facility);
  for (const auto& [k, v] : request.context) {
    if (v && !schema.is_placeholder(*v)) r.context[k] = *v;
  }
  r.start_year = request.start_year;
  r.end_year = request.end_year;
  return r;
}

void Predictor::add(ModelBundle bundle) {
  const Facility f = bundle.facility();
  bundles_.insert_or_assign(f, std::move(bundle));
}

Predictor Predictor::load(const std::filesystem::path& dir) {
  Predictor p;
  if (std::filesystem::exists(dir / "bundle.json")) {
    p.add(ModelBundle::load(dir));
    return p;
  }
  for (Facility f : {Facility::kRoadway, Facility::kIntersection}) {
    const auto sub = dir / std::string(cmf::to_string(f));
    if (std::filesystem::exists(sub / "bundle.json")) p.add(ModelBundle::load(sub));
  }
  if (p.bundles_.empty()) {
    throw ArtifactError("no model bundles under " + dir.string() + "; run `cmfkit train` first");
  }
  return p;
}

const ModelBundle& Predictor::bundle(Facility facility) const {
  auto it = bundles_.find(facility);
  if (it == bundles_.end()) {
    throw RequestError(404, "no model loaded for facility " + std::string(cmf::to_string(facility)));
  }
  return it->second;
}

PredictionResponse Predictor::predict(const PredictionRequest& request) const {
  const ModelBundle& b = bundle(request.facility);
  const ScenarioRecord record = to_record(request);
  PredictionResponse resp;
  resp.pseudo_sentence_echo = b.sentence(record).text;
  resp.cmf_hat = b.predict(record);
  resp.nature = nature_of(resp.cmf_hat);
  resp.model_version = b.model_version();
  return resp;
}

std::string Predictor::model_version() const {
  std::string out;
  for (const auto& [f, b] : bundles_) {
    if (!out.empty()) out += "+";
    out += bundles_.size() == 1 ? b.model_version() : std::string(cmf::to_string(f)) + ":" + b.model_version();
  }
  return out;
}

nlohmann::json Predictor::model_info() const {
  nlohmann::json facilities = nlohmann::json::object();
  for (const auto& [f, b] : bundles_) {
    const auto& meta = b.metadata();
    facilities[std::string(cmf::to_string(f))] = {
        {"model_version", b.model_version()},
        {"context_fields", meta.value("context_fields", nlohmann::json::array())},
        {"vocabulary", meta.value("vocabulary", nlohmann::json::object())},
        {"encoded_features", meta.value("features", nlohmann::json::array())},
        {"backbone", meta.value("backbone", nlohmann::json::object())},
        {"blocks", {{"m", b.model().blocks().semantic}, {"k", b.model().blocks().encoded}, {"years", b.model().blocks().years}}},
        {"hidden_widths", b.model().hidden_widths()},
        {"output_scaling", meta.value("output_scaling", "")},
    };
  }
  return {{"model_version", model_version()}, {"facilities", facilities}};
}

Service::Service(std::shared_ptr<const Predictor> predictor, ServiceOptions options)
    : predictor_(std::move(predictor)), options_(options) {
  if (!predictor_) throw Error("service needs a predictor");
}

HttpResult Service::predict(const std::string& body) const {
  try {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      return error_result(400, std::string("malformed JSON: ") + e.what());
    }
    return HttpResult{200, predictor_->predict(parse_request(j)).to_json()};
  } catch (const RequestError& e) {
    return error_result(e.status(), e.what());
  } catch (const std::exception& e) {
    return error_result(500, e.what());
  }
}

HttpResult Service::predict_batch(const std::string& body) const {
  try {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      return error_result(400, std::string("malformed JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("requests")) j = j["requests"];
    if (!j.is_array()) return error_result(400, "requests: expected a JSON array");
    if (j.size() > options_.batch_cap) {
      return error_result(413, "batch of " + std::to_string(j.size()) + " exceeds the cap of " +
                                   std::to_string(options_.batch_cap));
    }
    std::vector<PredictionRequest> requests;
    for (std::size_t i = 0; i < j.size(); ++i) {
      requests.push_back(parse_request(j[i], "requests[" + std::to_string(i) + "]"));
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : requests) out.push_back(predictor_->predict(r).to_json());
    return HttpResult{200, out};
  } catch (const RequestError& e) {
    return error_result(e.status(), e.what());
  } catch (const std::exception& e) {
    return error_result(500, e.what());
  }
}

HttpResult Service::model() const {
  nlohmann::json info = predictor_->model_info();
  info["batch_cap"] = options_.batch_cap;
  return HttpResult{200, info};
}

HttpResult Service::health() const {
  return HttpResult{200, {{"status", "ok"}, {"model_version", predictor_->model_version()}}};
}

struct HttpServer::Impl {
  std::shared_ptr<const Service> service;
  httplib::Server server;
};

HttpServer::HttpServer(std::shared_ptr<const Service> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto svc = impl_->service;
  impl_->server.Post("/predict", [svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->predict(req.body));
  });
  impl_->server.Post("/predict/batch", [svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->predict_batch(req.body));
  });
  impl_->server.Get("/model", [svc, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, svc->model());
  });
  impl_->server.Get("/health", [svc, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, svc->health());
  });
  // Browser clients (the scenario explorer) are served from another origin.
  impl_->server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Headers", "Content-Type"}});
  impl_->server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace cmf::service
