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

// cmfkit command-line driver.
//
//   cmfkit synth     --out data.csv
//   cmfkit ingest    --input export.csv
//   cmfkit pairs     [--facility F]
//   cmfkit finetune  [--facility F]
//   cmfkit train     [--facility F]
//   cmfkit evaluate  [--facility F] [--models cmf,non-tuning,non-encoding]
//   cmfkit report    [--facility F] [--group-by category,area_type]
//   cmfkit predict   --json request.json
//   cmfkit serve     [--bind host:port] [--artifacts dir]
//
// Artifacts live under --workdir (default ./cmfkit-work):
//   data/<facility>.jsonl, data/rejections.jsonl, data/ingest_report.json
//   pairs/<facility>.jsonl
//   backbone/<facility>/
//   artifacts/<facility>/          serving bundle
//   reports/<facility>/<model>/    report bundle

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cmf/evaluation.hpp"
#include "cmf/ingest.hpp"
#include "cmf/pipeline.hpp"
#include "cmf/scenario_text.hpp"
#include "cmf/service.hpp"
#include "cmf/spsf.hpp"
#include "cmf/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised when an input produced by an earlier command is absent.
class MissingArtifact : public cmf::Error {
 public:
  MissingArtifact(const fs::path& path, const std::string& producer)
      : cmf::Error("missing " + path.string() + "; run `cmfkit " + producer + "` first") {}
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string facility = "all";
  fs::path workdir = "cmfkit-work";
};

cmf::PipelineConfig load_config(const Globals& g) {
  cmf::PipelineConfig cfg;
  if (!g.config_path.empty()) cfg = cmf::PipelineConfig::load(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

std::vector<cmf::Facility> facilities(const Globals& g) {
  if (g.facility == "all") return {cmf::Facility::kRoadway, cmf::Facility::kIntersection};
  return {cmf::parse_facility(g.facility)};
}

std::string name(cmf::Facility f) { return std::string(cmf::to_string(f)); }

fs::path data_path(const Globals& g, cmf::Facility f) { return g.workdir / "data" / (name(f) + ".jsonl"); }
fs::path pairs_path(const Globals& g, cmf::Facility f) { return g.workdir / "pairs" / (name(f) + ".jsonl"); }
fs::path backbone_dir(const Globals& g, cmf::Facility f) { return g.workdir / "backbone" / name(f); }
fs::path artifacts_root(const Globals& g) { return g.workdir / "artifacts"; }
fs::path report_dir(const Globals& g, cmf::Facility f, const std::string& model) {
  return g.workdir / "reports" / name(f) / model;
}

cmf::Dataset load_data(const Globals& g, cmf::Facility f) {
  const auto path = data_path(g, f);
  if (!fs::exists(path)) throw MissingArtifact(path, "ingest");
  return cmf::read_dataset_jsonl(path.string(), f);
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw cmf::Error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

std::string read_text(const std::string& path) {
  if (path == "-") return std::string(std::istreambuf_iterator<char>(std::cin), {});
  std::ifstream is(path);
  if (!is) throw cmf::Error("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t records = 2000;
  double noise = 0.03;
  double missing_rate = 0.15;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  std::vector<cmf::ScenarioRecord> all;
  for (cmf::Facility f : facilities(g)) {
    cmf::synthetic::Options o;
    o.records = a.records;
    o.noise_sigma = a.noise;
    o.missing_rate = a.missing_rate;
    o.seed = g.seed.value_or(1) + (f == cmf::Facility::kIntersection ? 7919 : 0);
    o.facility = f;
    auto records = cmf::synthetic::generate(o);
    for (auto& r : records) r.id = (f == cmf::Facility::kRoadway ? "R" : "I") + r.id.substr(1);
    all.insert(all.end(), records.begin(), records.end());
  }
  std::ofstream os(a.out);
  if (!os) throw cmf::Error("cannot write " + a.out);
  os << cmf::synthetic::to_clearinghouse_csv(all);
  std::cout << "wrote " << all.size() << " records to " << a.out << "\n";
  return 0;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string mapping;
  double cmf_max = 2.0;
  bool sentences = false;
};

int run_ingest(const Globals& g, const IngestArgs& a) {
  const auto mapping =
      a.mapping.empty() ? cmf::ingest::ColumnMapping::defaults() : cmf::ingest::ColumnMapping::load(a.mapping);
  const auto raws = cmf::ingest::load_clearinghouse_csv(a.input, mapping);
  auto batch = cmf::ingest::normalize_all(raws, mapping);
  const auto filtered = cmf::ingest::filter_outliers(batch.records, a.cmf_max);
  auto by_facility = cmf::ingest::split_by_facility(filtered.records);

  const fs::path dir = g.workdir / "data";
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "rejections.jsonl");
    for (const auto& r : batch.rejections) os << cmf::ingest::to_json(r).dump() << "\n";
  }
  json report{{"input", a.input},
              {"rows", raws.size()},
              {"rejected", batch.rejections.size()},
              {"outliers_removed", filtered.removed},
              {"cmf_max", a.cmf_max},
              {"facilities", json::object()}};
  json reasons = json::object();
  for (const auto& r : batch.rejections) reasons[r.reason] = reasons.value(r.reason, 0) + 1;
  report["rejection_reasons"] = reasons;

  for (cmf::Facility f : facilities(g)) {
    auto it = by_facility.find(f);
    const cmf::Dataset ds = it != by_facility.end() ? it->second : cmf::Dataset(f);
    cmf::write_jsonl(data_path(g, f).string(), ds.records());
    json rates = json::object();
    for (const auto& m : cmf::ingest::missing_rates(ds)) rates[m.field] = m.rate();
    report["facilities"][name(f)] = {{"records", ds.size()}, {"missing_rates", rates}};
    if (a.sentences) {
      std::ofstream os(dir / (name(f) + ".sentences.jsonl"));
      for (const auto& r : ds.records()) {
        const auto s = cmf::build_pseudo_sentence(r, ds.schema());
        os << json{{"id", s.source_id}, {"text", s.text}, {"fields", s.field_count}}.dump() << "\n";
      }
    }
    std::cout << name(f) << ": " << ds.size() << " records\n";
  }
  write_json(dir / "ingest_report.json", report);
  std::cout << "rejected " << batch.rejections.size() << ", outliers removed " << filtered.removed << "\n";
  return 0;
}

// ---- pairs / finetune -----------------------------------------------------

int run_pairs(const Globals& g) {
  const auto cfg = load_config(g);
  for (cmf::Facility f : facilities(g)) {
    const auto ds = load_data(g, f);
    const auto pairs = cmf::sample_pairs(ds, cfg);
    fs::create_directories(pairs_path(g, f).parent_path());
    cmf::write_pairs_jsonl(pairs_path(g, f).string(), pairs);
    std::vector<std::size_t> hist(8, 0);
    for (const auto& p : pairs) ++hist[static_cast<std::size_t>(cmf::score_bucket(p.gold_score, 8))];
    std::cout << name(f) << ": " << pairs.size() << " pairs, buckets";
    for (auto h : hist) std::cout << " " << h;
    std::cout << "\n";
  }
  return 0;
}

int run_finetune(const Globals& g) {
  const auto cfg = load_config(g);
  const auto base = cmf::make_base_backbone(cfg);
  for (cmf::Facility f : facilities(g)) {
    const auto ds = load_data(g, f);
    if (!fs::exists(pairs_path(g, f))) throw MissingArtifact(pairs_path(g, f), "pairs");
    const auto pairs = cmf::read_pairs_jsonl(pairs_path(g, f).string());
    const auto result = cmf::fine_tune_backbone(base, ds, pairs, cfg);
    cmf::save_backbone(result.backbone, backbone_dir(g, f));
    write_json(backbone_dir(g, f) / "finetune_log.json",
               {{"train_pairs", result.train_pairs.size()},
                {"validation_pairs", result.validation_pairs.size()},
                {"train_loss", result.train_loss},
                {"validation_loss", result.validation_loss}});
    std::cout << name(f) << ": pair loss " << result.train_loss.front() << " -> " << result.train_loss.back()
              << ", backbone " << result.backbone.identifier() << "\n";
  }
  return 0;
}

// ---- train ----------------------------------------------------------------

int run_train(const Globals& g) {
  auto cfg = load_config(g);
  for (cmf::Facility f : facilities(g)) {
    const auto ds = load_data(g, f);
    cmf::EncoderBackbone base;
    if (cfg.finetune) {
      if (!fs::exists(backbone_dir(g, f) / "manifest.json")) {
        throw MissingArtifact(backbone_dir(g, f), "finetune");
      }
      base = cmf::load_backbone(backbone_dir(g, f));
    } else {
      base = cmf::make_base_backbone(cfg);
    }
    auto run_cfg = cfg;
    run_cfg.finetune = false;  // the backbone is already tuned
    cmf::CmfPipeline pipeline(run_cfg, base);
    pipeline.prepare(ds);
    pipeline.fit(ds, cmf::HyperParams{cfg.train.hidden, cfg.train.learning_rate});
    const auto out = artifacts_root(g) / name(f);
    pipeline.export_bundle(out, ds);
    std::cout << name(f) << ": trained on " << ds.size() << " records, loss "
              << pipeline.train_result().final_loss << ", bundle " << out.string() << "\n";
  }
  return 0;
}

// ---- evaluate / report ----------------------------------------------------

struct EvaluateArgs {
  std::string models = "cmf,non-tuning,non-encoding";
};

int run_evaluate(const Globals& g, const EvaluateArgs& a) {
  const auto cfg = load_config(g);
  const auto models = split_list(a.models);
  bool complete = true;
  for (cmf::Facility f : facilities(g)) {
    const auto ds = load_data(g, f);
    json summary = json::object();
    for (const auto& model : models) {
      cmf::MetricsReport report;
      if (model == "cmf") {
        report = cmf::evaluate_model(ds, cfg, cmf::make_base_backbone(cfg));
      } else if (model == "non-tuning") {
        report = cmf::pretrained_baseline(ds, cmf::make_base_backbone(cfg), cfg);
      } else if (model == "non-encoding") {
        report = cmf::knn_report(ds, cfg);
      } else {
        throw cmf::Error("unknown model '" + model + "' (expected cmf, non-tuning or non-encoding)");
      }
      const auto groups = cmf::subgroup_report(report, ds, {std::string(cmf::field::kCategory)});
      cmf::write_report_bundle(report_dir(g, f, model), report, groups, cfg.to_json());
      complete = complete && report.complete();
      summary[model] = {{"mae", report.mae}, {"rmse", report.rmse}, {"cr", report.cr}, {"pop", report.pop},
                        {"complete", report.complete()}};
      std::cout << name(f) << " " << model << ": MAE " << report.mae << " RMSE " << report.rmse << " CR "
                << report.cr << " PoP " << report.pop << (report.complete() ? "" : " (partial)") << "\n";
    }
    write_json(g.workdir / "reports" / name(f) / "summary.json", summary);
  }
  return complete ? 0 : 2;
}

struct ReportArgs {
  std::string model = "cmf";
  std::string group_by = "category";
  bool case_study = false;
};

int run_report(const Globals& g, const ReportArgs& a) {
  for (cmf::Facility f : facilities(g)) {
    const auto ds = load_data(g, f);
    const auto dir = report_dir(g, f, a.model);
    if (!fs::exists(dir / "predictions.jsonl")) throw MissingArtifact(dir / "predictions.jsonl", "evaluate");
    const auto report = cmf::read_report_bundle(dir);
    const auto keys = split_list(a.group_by);
    const auto groups = cmf::subgroup_report(report, ds, keys);
    std::string stem;
    for (const auto& k : keys) stem += (stem.empty() ? "" : "_") + k;
    std::ofstream(dir / ("subgroups_" + stem + ".csv")) << groups.to_csv();
    if (keys.size() == 2) std::ofstream(dir / ("grid_" + stem + ".csv")) << groups.to_grid_csv();
    std::cout << name(f) << " " << a.model << ": " << groups.rows.size() << " groups over " << stem << "\n";
    if (a.case_study) {
      const auto cs = cmf::case_study_structured(report, ds);
      std::ofstream(dir / "case_study.csv") << cs.scatter_csv();
      if (!cs.warning.empty()) std::cerr << "warning: " << cs.warning << "\n";
      std::cout << name(f) << ": case study " << cs.rows.size() << " instances\n";
    }
  }
  return 0;
}

// ---- predict / serve ------------------------------------------------------

std::string env_or(const char* var, const std::string& fallback) {
  const char* v = std::getenv(var);
  return v && *v ? std::string(v) : fallback;
}

fs::path resolve_artifacts(const Globals& g, const std::string& flag) {
  if (!flag.empty()) return flag;
  return env_or("CMFKIT_ARTIFACTS", artifacts_root(g).string());
}

cmf::service::Predictor load_predictor(const fs::path& dir) {
  if (!fs::exists(dir)) throw MissingArtifact(dir, "train");
  try {
    return cmf::service::Predictor::load(dir);
  } catch (const cmf::ArtifactError& e) {
    throw cmf::Error(std::string(e.what()));
  }
}

struct PredictArgs {
  std::string json_path;
  std::string artifacts;
};

int run_predict(const Globals& g, const PredictArgs& a) {
  json input = json::parse(read_text(a.json_path));
  const bool batch = input.is_array();
  if (!batch) input = json::array({input});
  auto fill_facility = [&](json& j) {
    if (j.is_object() && !j.contains("facility") && g.facility != "all") j["facility"] = g.facility;
  };
  for (auto& j : input) fill_facility(j);
  if (g.facility != "all") {
    const auto f = cmf::parse_facility(g.facility);
    const auto dir = resolve_artifacts(g, a.artifacts);
    if (!fs::exists(dir / "bundle.json") && !fs::exists(dir / name(f) / "bundle.json")) {
      throw MissingArtifact(dir / name(f), "train");
    }
  }
  const auto predictor = load_predictor(resolve_artifacts(g, a.artifacts));
  json out = json::array();
  for (std::size_t i = 0; i < input.size(); ++i) {
    const auto req = cmf::service::parse_request(input[i], batch ? "requests[" + std::to_string(i) + "]" : "");
    out.push_back(predictor.predict(req).to_json());
  }
  std::cout << (batch ? out : out[0]).dump(2) << "\n";
  return 0;
}

cmf::service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

struct ServeArgs {
  std::string bind;
  std::string artifacts;
  std::size_t batch_cap = 256;
};

int run_serve(const Globals& g, const ServeArgs& a) {
  const std::string bind = a.bind.empty() ? env_or("CMFKIT_BIND", "127.0.0.1:8080") : a.bind;
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw cmf::Error("bind address must be host:port, got '" + bind + "'");
  const std::string host = bind.substr(0, colon);
  const int port = std::stoi(bind.substr(colon + 1));

  auto predictor = std::make_shared<const cmf::service::Predictor>(load_predictor(resolve_artifacts(g, a.artifacts)));
  auto service = std::make_shared<const cmf::service::Service>(predictor, cmf::service::ServiceOptions{a.batch_cap});
  cmf::service::HttpServer server(service);
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving model " << predictor->model_version() << " on " << host << ":" << bound << std::endl;
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmfkit: crash modification factor prediction"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config file)");
  app.add_option("--config", g.config_path, "Config file (.json or key = value text)")->check(CLI::ExistingFile);
  app.add_option("--facility", g.facility, "roadway, intersection or all")
      ->check(CLI::IsMember({"roadway", "intersection", "all"}));
  std::string workdir = g.workdir.string();
  app.add_option("--workdir", workdir, "Artifact directory")->capture_default_str();
  // Accept the global flags after the subcommand name as well.
  app.fallthrough();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic clearinghouse-style CSV");
  c_synth->add_option("--out", synth.out, "Output CSV")->required();
  c_synth->add_option("--records", synth.records, "Records per facility")->capture_default_str();
  c_synth->add_option("--noise", synth.noise, "Gaussian noise sigma")->capture_default_str();
  c_synth->add_option("--missing-rate", synth.missing_rate, "Per-field missing probability")->capture_default_str();

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Normalize a clearinghouse CSV export");
  c_ingest->add_option("--input", ingest.input, "CSV export")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--mapping", ingest.mapping, "Column mapping JSON")->check(CLI::ExistingFile);
  c_ingest->add_option("--cmf-max", ingest.cmf_max, "Drop records with CMF above this")->capture_default_str();
  c_ingest->add_flag("--sentences", ingest.sentences, "Also dump pseudo-sentences");

  auto* c_pairs = app.add_subcommand("pairs", "Sample scenario pairs scored by safety similarity");
  auto* c_finetune = app.add_subcommand("finetune", "Fine-tune the sentence encoder on the pairs");
  auto* c_train = app.add_subcommand("train", "Train the regressor and export a serving bundle");

  EvaluateArgs evaluate;
  auto* c_evaluate = app.add_subcommand("evaluate", "Nested cross-validation of the model and baselines");
  c_evaluate->add_option("--models", evaluate.models, "Comma-separated models")->capture_default_str();

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Subgroup and case-study tables from an evaluation");
  c_report->add_option("--model", report.model, "Evaluated model")->capture_default_str();
  c_report->add_option("--group-by", report.group_by, "Comma-separated record fields")->capture_default_str();
  c_report->add_flag("--case-study", report.case_study, "Shoulder-width case study scatter data");

  PredictArgs predict;
  auto* c_predict = app.add_subcommand("predict", "Predict a CMF for a scenario request");
  c_predict->add_option("--json", predict.json_path, "Request JSON file (object or array, - for stdin)")->required();
  c_predict->add_option("--artifacts", predict.artifacts, "Bundle directory");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP prediction service");
  c_serve->add_option("--bind", serve.bind, "host:port (env CMFKIT_BIND, default 127.0.0.1:8080)");
  c_serve->add_option("--artifacts", serve.artifacts, "Bundle directory (env CMFKIT_ARTIFACTS)");
  c_serve->add_option("--batch-cap", serve.batch_cap, "Largest accepted batch")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed;
  g.workdir = workdir;

  try {
    if (*c_synth) return run_synth(g, synth);
    if (*c_ingest) return run_ingest(g, ingest);
    if (*c_pairs) return run_pairs(g);
    if (*c_finetune) return run_finetune(g);
    if (*c_train) return run_train(g);
    if (*c_evaluate) return run_evaluate(g, evaluate);
    if (*c_report) return run_report(g, report);
    if (*c_predict) return run_predict(g, predict);
    if (*c_serve) return run_serve(g, serve);
  } catch (const cmf::service::RequestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
