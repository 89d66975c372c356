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

#include "cmf/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace cmf {
namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ParseError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParseError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& part : split(v, v.find('x') != std::string::npos ? 'x' : ',')) {
    const auto w = to_int(key, part);
    if (w <= 0) throw ParseError("config key '" + key + "': widths must be positive");
    out.push_back(static_cast<std::size_t>(w));
  }
  if (out.empty()) throw ParseError("config key '" + key + "': empty width list");
  return out;
}

void flatten_json(const nlohmann::json& j, const std::string& prefix,
                  std::vector<std::pair<std::string, nlohmann::json>>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten_json(v, key, out);
    } else {
      out.emplace_back(key, v);
    }
  }
}

}  // namespace

std::string HyperParams::label() const {
  std::string out;
  for (std::size_t i = 0; i < hidden.size(); ++i) out += (i ? "x" : "") + std::to_string(hidden[i]);
  std::ostringstream lr;
  lr << learning_rate;
  return out + "@" + lr.str();
}

nlohmann::json HyperParams::to_json() const {
  return {{"hidden", hidden}, {"learning_rate", learning_rate}};
}

std::vector<HyperParams> default_grid() {
  std::vector<HyperParams> grid;
  for (const auto& widths : std::vector<std::vector<std::size_t>>{{32, 16}, {64, 32}, {128, 64}}) {
    for (double lr : {1e-3, 3e-4}) grid.push_back(HyperParams{widths, lr});
  }
  return grid;
}

std::vector<HyperParams> parse_grid(const std::string& text) {
  std::vector<HyperParams> grid;
  for (const auto& entry : split(text, ';')) {
    const auto at = entry.find('@');
    if (at == std::string::npos) throw ParseError("grid entry '" + entry + "' must look like 64x32@1e-3");
    HyperParams hp;
    hp.hidden = to_widths("grid", trim(entry.substr(0, at)));
    hp.learning_rate = to_double("grid", trim(entry.substr(at + 1)));
    grid.push_back(hp);
  }
  if (grid.empty()) throw ParseError("grid is empty");
  return grid;
}

void PipelineConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "folds") folds = static_cast<int>(to_int(key, v));
  else if (key == "inner_folds") inner_folds = static_cast<int>(to_int(key, v));
  else if (key == "knn_k") knn_k = static_cast<int>(to_int(key, v));
  else if (key == "threads") threads = static_cast<int>(to_int(key, v));
  else if (key == "selection_metric") {
    if (v != "mse" && v != "mae") throw ParseError("selection_metric must be mse or mae");
    selection_metric = v;
  } else if (key == "backbone.kind") {
    if (v != "hashing" && v != "pretrained_transformer") {
      throw ParseError("backbone.kind must be hashing or pretrained_transformer");
    }
    backbone_kind = v;
  } else if (key == "backbone.dir") backbone_dir = v;
  else if (key == "backbone.checkpoint") checkpoint = v;
  else if (key == "backbone.table") embedding_table = v;
  else if (key == "hashing.dimension") hashing.dimension = static_cast<std::size_t>(to_int(key, v));
  else if (key == "hashing.max_ngram") hashing.max_ngram = static_cast<int>(to_int(key, v));
  else if (key == "hashing.salt") hashing.salt = v;
  else if (key == "finetune.enabled") finetune = to_bool(key, v);
  else if (key == "finetune.once") finetune_once = to_bool(key, v);
  else if (key == "finetune.adapter_dimension") adapter_dimension = static_cast<std::size_t>(to_int(key, v));
  else if (key == "finetune.pair_budget_factor") pair_budget_factor = to_double(key, v);
  else if (key == "finetune.stratify") stratify_pairs = to_bool(key, v);
  else if (key == "finetune.epochs") finetune_config.epochs = static_cast<int>(to_int(key, v));
  else if (key == "finetune.batch_size") finetune_config.batch_size = static_cast<int>(to_int(key, v));
  else if (key == "finetune.learning_rate") finetune_config.learning_rate = to_double(key, v);
  else if (key == "finetune.validation_fraction") finetune_config.validation_fraction = to_double(key, v);
  else if (key == "target_encoding.enabled") target_encoding = to_bool(key, v);
  else if (key == "target_encoding.smoothing") te_smoothing = to_double(key, v);
  else if (key == "target_encoding.features") te_features = split(v, ',');
  else if (key == "train.epochs") train.epochs = static_cast<int>(to_int(key, v));
  else if (key == "train.batch_size") train.batch_size = static_cast<int>(to_int(key, v));
  else if (key == "train.patience") train.patience = static_cast<int>(to_int(key, v));
  else if (key == "train.validation_fraction") train.validation_fraction = to_double(key, v);
  else if (key == "train.hidden") train.hidden = to_widths(key, v);
  else if (key == "train.learning_rate") train.learning_rate = to_double(key, v);
  else if (key == "grid") grid = parse_grid(v);
  else if (key == "embedding_cache.dir") embedding_cache_dir = v;
  else if (key == "text.render_field_names") render_field_names = to_bool(key, v);
  else throw ParseError("unknown config key '" + key + "'");
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  PipelineConfig cfg;
  std::vector<std::pair<std::string, nlohmann::json>> flat;
  flatten_json(j, "", flat);
  for (const auto& [key, value] : flat) {
    if (key == "grid" && value.is_array()) {
      cfg.grid.clear();
      for (const auto& e : value) {
        if (e.is_string()) {
          const auto parsed = parse_grid(e.get<std::string>());
          cfg.grid.insert(cfg.grid.end(), parsed.begin(), parsed.end());
        } else {
          cfg.grid.push_back(HyperParams{e.at("hidden").get<std::vector<std::size_t>>(),
                                         e.at("learning_rate").get<double>()});
        }
      }
      if (cfg.grid.empty()) throw ParseError("grid is empty");
      continue;
    }
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& e : value) text += (text.empty() ? "" : ",") + (e.is_string() ? e.get<std::string>() : e.dump());
    } else {
      text = value.dump();
    }
    cfg.set(key, text);
  }
  return cfg;
}

PipelineConfig PipelineConfig::from_key_values(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    try {
      return from_json(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  return from_key_values(ss.str());
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json grid_json = nlohmann::json::array();
  for (const auto& hp : grid) grid_json.push_back(hp.to_json());
  return {
      {"seed", seed},
      {"folds", folds},
      {"inner_folds", inner_folds},
      {"knn_k", knn_k},
      {"selection_metric", selection_metric},
      {"threads", threads},
      {"backbone", {{"kind", backbone_kind}, {"dir", backbone_dir}, {"checkpoint", checkpoint},
                    {"table", embedding_table}}},
      {"hashing", {{"dimension", hashing.dimension}, {"max_ngram", hashing.max_ngram}, {"salt", hashing.salt}}},
      {"finetune",
       {{"enabled", finetune},
        {"once", finetune_once},
        {"adapter_dimension", adapter_dimension},
        {"pair_budget_factor", pair_budget_factor},
        {"stratify", stratify_pairs},
        {"epochs", finetune_config.epochs},
        {"batch_size", finetune_config.batch_size},
        {"learning_rate", finetune_config.learning_rate},
        {"validation_fraction", finetune_config.validation_fraction}}},
      {"target_encoding", {{"enabled", target_encoding}, {"smoothing", te_smoothing}, {"features", te_features}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"patience", train.patience},
        {"validation_fraction", train.validation_fraction},
        {"hidden", train.hidden},
        {"learning_rate", train.learning_rate}}},
      {"grid", grid_json},
      {"embedding_cache", {{"dir", embedding_cache_dir}}},
      {"text", {{"render_field_names", render_field_names}}},
  };
}

std::string PipelineConfig::digest() const { return sha256_hex(to_json().dump()).substr(0, 16); }

}  // namespace cmf
