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

#include "cmf/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace cmf {
namespace {

void check_lengths(std::span<const double> y, std::span<const double> yhat) {
  if (y.empty()) throw Error("metric on empty input");
  if (y.size() != yhat.size()) {
    throw Error("metric length mismatch: " + std::to_string(y.size()) + " vs " + std::to_string(yhat.size()));
  }
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

FoldMetrics score(int fold, std::span<const double> y, std::span<const double> yhat) {
  FoldMetrics m;
  m.fold = fold;
  m.ok = true;
  m.n = y.size();
  m.mae = mae(y, yhat);
  m.rmse = rmse(y, yhat);
  m.cr = consistency_rate(y, yhat);
  m.pop = pop(y, yhat);
  return m;
}

struct FoldOutcome {
  FoldMetrics metrics;
  std::vector<PredictionRow> rows;
};

FoldOutcome run_fold(const Dataset& dataset, const FoldSplit& split, int f, const PipelineFactory& factory,
                     const std::vector<HyperParams>& grid, const NestedCvOptions& options) {
  FoldOutcome out;
  out.metrics.fold = f;
  try {
    const Dataset train = dataset.subset(split.outer_train(f));
    const Dataset test = dataset.subset(split.outer_test(f));
    auto pipeline = factory();
    pipeline->prepare(train);

    std::size_t best = 0;
    if (grid.size() > 1) {
      double best_loss = std::numeric_limits<double>::infinity();
      for (std::size_t h = 0; h < grid.size(); ++h) {
        double total = 0.0;
        for (int g = 0; g < split.inner_k; ++g) {
          const Dataset itrain = dataset.subset(split.inner_train(f, g));
          const Dataset itest = dataset.subset(split.inner_test(f, g));
          pipeline->fit(itrain, grid[h]);
          const auto pred = pipeline->predict(itest);
          std::vector<double> y;
          for (const auto& r : itest.records()) y.push_back(r.cmf);
          if (options.selection_metric == "mae") {
            total += mae(y, pred);
          } else {
            const double e = rmse(y, pred);
            total += e * e;
          }
        }
        const double loss = total / split.inner_k;
        if (loss < best_loss) {
          best_loss = loss;
          best = h;
        }
      }
    }
    pipeline->fit(train, grid[best]);
    if (options.observer) options.observer(f, *pipeline, train, test);
    const auto pred = pipeline->predict(test);
    std::vector<double> y;
    for (std::size_t i = 0; i < test.size(); ++i) {
      y.push_back(test.records()[i].cmf);
      out.rows.push_back(PredictionRow{test.records()[i].id, test.records()[i].cmf, pred[i], f});
    }
    out.metrics = score(f, y, pred);
    out.metrics.selected = grid[best].label();
  } catch (const std::exception& e) {
    out.metrics.ok = false;
    out.metrics.error = e.what();
    out.rows.clear();
  }
  return out;
}

}  // namespace

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

double consistency_rate(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += (y[i] - 1.0) * (yhat[i] - 1.0) >= 0.0;
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

double pop(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += std::abs(y[i] - yhat[i]) < 0.05;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(y.size());
}

FoldSplit FoldSplit::make(std::size_t n, int k, int inner_k, std::uint64_t seed) {
  if (k < 2 || inner_k < 2) throw Error("fold counts must be at least 2");
  if (n < static_cast<std::size_t>(k)) {
    throw Error("dataset has " + std::to_string(n) + " records, fewer than K = " + std::to_string(k));
  }
  FoldSplit s;
  s.k = k;
  s.inner_k = inner_k;
  s.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  s.outer.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) s.outer[order[i]] = static_cast<int>(i % k);

  for (int f = 0; f < k; ++f) {
    std::vector<int> assign(n, -1);
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (s.outer[i] != f) members.push_back(i);
    std::mt19937_64 inner_rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(f + 1)));
    std::shuffle(members.begin(), members.end(), inner_rng);
    for (std::size_t i = 0; i < members.size(); ++i) assign[members[i]] = static_cast<int>(i % inner_k);
    s.inner.push_back(std::move(assign));
  }
  return s;
}

std::vector<std::size_t> FoldSplit::outer_train(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < outer.size(); ++i)
    if (outer[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::outer_test(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < outer.size(); ++i)
    if (outer[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::inner_train(int fold, int inner_fold) const {
  std::vector<std::size_t> out;
  const auto& a = inner.at(fold);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] >= 0 && a[i] != inner_fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::inner_test(int fold, int inner_fold) const {
  std::vector<std::size_t> out;
  const auto& a = inner.at(fold);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] == inner_fold) out.push_back(i);
  return out;
}

bool MetricsReport::complete() const {
  return !folds.empty() && std::all_of(folds.begin(), folds.end(), [](const auto& f) { return f.ok; });
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json jf = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json e{{"fold", f.fold}, {"ok", f.ok}, {"n", f.n}};
    if (f.ok) {
      e.update({{"mae", f.mae}, {"rmse", f.rmse}, {"cr", f.cr}, {"pop", f.pop}, {"selected", f.selected}});
    } else {
      e["error"] = f.error;
    }
    jf.push_back(e);
  }
  return {{"model", model},
          {"facility", facility},
          {"folds", jf},
          {"average", {{"mae", mae}, {"rmse", rmse}, {"cr", cr}, {"pop", pop}}},
          {"complete", complete()},
          {"predictions", predictions.size()},
          {"config_digest", config_digest},
          {"data_digest", data_digest},
          {"notes", notes}};
}

MetricsReport nested_cv(const Dataset& dataset, const PipelineFactory& factory,
                        const std::vector<HyperParams>& grid, const NestedCvOptions& options) {
  if (grid.empty()) throw Error("hyperparameter grid is empty");
  const FoldSplit split = FoldSplit::make(dataset.size(), options.k, options.inner_k, options.seed);

  std::vector<FoldOutcome> outcomes(options.k);
  if (options.threads > 1) {
    std::vector<std::future<FoldOutcome>> futures;
    for (int f = 0; f < options.k; ++f) {
      futures.push_back(std::async(std::launch::async, run_fold, std::cref(dataset), std::cref(split), f,
                                   std::cref(factory), std::cref(grid), std::cref(options)));
    }
    for (int f = 0; f < options.k; ++f) outcomes[f] = futures[f].get();
  } else {
    for (int f = 0; f < options.k; ++f) outcomes[f] = run_fold(dataset, split, f, factory, grid, options);
  }

  MetricsReport report;
  report.model = factory()->name();
  report.facility = std::string(to_string(dataset.facility()));
  report.data_digest = dataset_digest(dataset);
  int ok = 0;
  for (auto& o : outcomes) {
    if (o.metrics.ok) {
      ++ok;
      report.mae += o.metrics.mae;
      report.rmse += o.metrics.rmse;
      report.cr += o.metrics.cr;
      report.pop += o.metrics.pop;
    } else {
      std::clog << "nested_cv: fold " << o.metrics.fold << " failed: " << o.metrics.error << "\n";
    }
    report.folds.push_back(o.metrics);
    for (auto& r : o.rows) report.predictions.push_back(std::move(r));
  }
  if (ok > 0) {
    report.mae /= ok;
    report.rmse /= ok;
    report.cr /= ok;
    report.pop /= ok;
  }
  if (ok < options.k) {
    report.notes.push_back("partial coverage: " + std::to_string(ok) + " of " + std::to_string(options.k) +
                           " outer folds completed");
  }
  return report;
}

std::vector<std::string> knn_keys(const ScenarioRecord& record, const FieldSchema& schema) {
  std::vector<std::string> keys;
  keys.push_back(record.countermeasure_name);
  for (const auto& f : schema.categorical_fields) keys.push_back(record.get(f).value_or("\x01missing"));
  auto bin = [](std::optional<int> y) {
    if (!y) return std::string("\x01missing");
    const int b = static_cast<int>(std::floor(*y / 5.0)) * 5;
    return std::to_string(b);
  };
  keys.push_back(bin(record.start_year));
  keys.push_back(bin(record.end_year));
  return keys;
}

std::vector<double> knn_baseline(const Dataset& train, const Dataset& test, int k) {
  if (train.empty()) throw Error("kNN baseline needs a non-empty training set");
  const std::size_t kk = std::min<std::size_t>(std::max(k, 1), train.size());
  const FieldSchema& schema = train.schema();

  // Intern keys per column so distances compare integers.
  std::vector<std::map<std::string, int>> vocab;
  auto encode = [&](const ScenarioRecord& r) {
    const auto keys = knn_keys(r, schema);
    if (vocab.empty()) vocab.resize(keys.size());
    std::vector<int> out(keys.size());
    for (std::size_t c = 0; c < keys.size(); ++c) {
      out[c] = vocab[c].emplace(keys[c], static_cast<int>(vocab[c].size())).first->second;
    }
    return out;
  };
  std::vector<std::vector<int>> codes;
  codes.reserve(train.size());
  for (const auto& r : train.records()) codes.push_back(encode(r));

  std::vector<double> out;
  out.reserve(test.size());
  std::vector<std::pair<int, std::size_t>> dist(train.size());
  for (const auto& r : test.records()) {
    const auto q = encode(r);
    for (std::size_t i = 0; i < codes.size(); ++i) {
      int d = 0;
      for (std::size_t c = 0; c < q.size(); ++c) d += codes[i][c] != q[c];
      dist[i] = {d, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    double s = 0.0;
    for (std::size_t j = 0; j < kk; ++j) s += train.records()[dist[j].second].cmf;
    out.push_back(s / static_cast<double>(kk));
  }
  return out;
}

std::vector<double> KnnPipeline::predict(const Dataset& test) const {
  if (!train_) throw Error("kNN pipeline used before fit");
  return knn_baseline(*train_, test, k_);
}

MetricsReport evaluate_model(const Dataset& dataset, const PipelineConfig& config, const EncoderBackbone& base,
                             FoldObserver observer) {
  auto shared = std::make_shared<SharedBackbone>();
  PipelineFactory factory = [&config, &base, shared] {
    return std::make_unique<CmfPipeline>(config, base, config.finetune ? "cmf-encoder" : "non-tuning", shared);
  };
  NestedCvOptions opts;
  opts.k = config.folds;
  opts.inner_k = config.inner_folds;
  opts.seed = config.seed;
  opts.selection_metric = config.selection_metric;
  opts.threads = config.finetune_once ? 1 : config.threads;
  opts.observer = std::move(observer);
  MetricsReport report = nested_cv(dataset, factory, config.grid, opts);
  report.config_digest = config.digest();
  report.notes.push_back("output unit is 2*sigmoid(z): predictions lie in (0, 2)");
  report.notes.push_back("backbone: " + base.identifier());
  if (config.finetune && config.finetune_once) {
    report.notes.push_back("quick mode: embedding fine-tuned once on the first outer-train fold and reused "
                           "frozen for every fold (not per-fold fine-tuning)");
  }
  return report;
}

MetricsReport pretrained_baseline(const Dataset& dataset, const EncoderBackbone& backbone,
                                  const PipelineConfig& config) {
  PipelineConfig cfg = config;
  cfg.finetune = false;
  MetricsReport report = evaluate_model(dataset, cfg, backbone);
  report.model = "non-tuning";
  return report;
}

MetricsReport knn_report(const Dataset& dataset, const PipelineConfig& config) {
  const int k = config.knn_k;
  PipelineFactory factory = [k] { return std::make_unique<KnnPipeline>(k); };
  NestedCvOptions opts;
  opts.k = config.folds;
  opts.inner_k = config.inner_folds;
  opts.seed = config.seed;
  MetricsReport report = nested_cv(dataset, factory, {HyperParams{}}, opts);
  report.config_digest = config.digest();
  return report;
}

std::string SubgroupReport::to_csv() const {
  std::ostringstream os;
  for (const auto& k : keys) os << csv_cell(k) << ",";
  os << "n,mae,rmse,cr,pop\n";
  os.precision(10);
  for (const auto& r : rows) {
    for (const auto& g : r.group) os << csv_cell(g) << ",";
    os << r.n << "," << r.mae << "," << r.rmse << "," << r.cr << "," << r.pop << "\n";
  }
  return os.str();
}

std::string SubgroupReport::to_grid_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "row,column,n,mae\n";
  for (const auto& r : rows) {
    const std::string row = r.group.empty() ? "" : r.group[0];
    std::string col;
    for (std::size_t i = 1; i < r.group.size(); ++i) col += (i > 1 ? " | " : "") + r.group[i];
    os << csv_cell(row) << "," << csv_cell(col) << "," << r.n << "," << r.mae << "\n";
  }
  return os.str();
}

SubgroupReport subgroup_report(const MetricsReport& report, const Dataset& dataset,
                               const std::vector<std::string>& keys) {
  for (const auto& k : keys) {
    if (!dataset.schema().has_field(k)) throw Error("unknown grouping key '" + k + "'");
  }
  std::map<std::string, const ScenarioRecord*> by_id;
  for (const auto& r : dataset.records()) by_id[r.id] = &r;

  std::map<std::vector<std::string>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& p : report.predictions) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) throw Error("prediction for unknown record " + p.id);
    std::vector<std::string> g;
    for (const auto& k : keys) g.push_back(it->second->get(k).value_or(std::string(kMissingCategory)));
    auto& [y, yhat] = groups[g];
    y.push_back(p.cmf);
    yhat.push_back(p.cmf_hat);
  }
  SubgroupReport out;
  out.keys = keys;
  for (const auto& [g, v] : groups) {
    SubgroupRow row;
    row.group = g;
    row.n = v.first.size();
    row.mae = mae(v.first, v.second);
    row.rmse = rmse(v.first, v.second);
    row.cr = consistency_rate(v.first, v.second);
    row.pop = pop(v.first, v.second);
    out.rows.push_back(std::move(row));
  }
  return out;
}

bool is_shoulder_width_countermeasure(const ScenarioRecord& record) {
  std::string text = lower(record.countermeasure_name + " | " + record.category() + " | " +
                           record.get(field::kSubcategory).value_or(""));
  return text.find("shoulder") != std::string::npos &&
         (text.find("width") != std::string::npos || text.find("widen") != std::string::npos);
}

std::string CaseStudy::scatter_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "id,cmf,cmf_hat\n";
  for (const auto& r : rows) os << csv_cell(r.id) << "," << r.cmf << "," << r.cmf_hat << "\n";
  return os.str();
}

CaseStudy case_study_structured(const MetricsReport& report, const Dataset& dataset, const RecordPredicate& filter) {
  std::map<std::string, const ScenarioRecord*> by_id;
  for (const auto& r : dataset.records()) by_id[r.id] = &r;
  CaseStudy out;
  for (const auto& p : report.predictions) {
    auto it = by_id.find(p.id);
    if (it != by_id.end() && filter(*it->second)) out.rows.push_back(p);
  }
  if (out.rows.empty()) {
    out.warning = "case study filter matched no predictions";
    std::clog << "warning: " << out.warning << "\n";
  }
  return out;
}

void write_report_bundle(const std::filesystem::path& dir, const MetricsReport& report,
                         const SubgroupReport& subgroups, const nlohmann::json& config) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "metrics.json") << report.to_json().dump(2) << "\n";
  {
    std::ofstream os(dir / "predictions.jsonl");
    for (const auto& p : report.predictions) {
      os << nlohmann::json{{"id", p.id}, {"cmf", p.cmf}, {"cmf_hat", p.cmf_hat}, {"fold", p.fold}}.dump() << "\n";
    }
  }
  std::ofstream(dir / "subgroups.csv") << subgroups.to_csv();
  nlohmann::json cfg = config;
  cfg["data_digest"] = report.data_digest;
  cfg["config_digest"] = report.config_digest;
  std::ofstream(dir / "config.json") << cfg.dump(2) << "\n";
}

MetricsReport read_report_bundle(const std::filesystem::path& dir) {
  const auto metrics_path = dir / "metrics.json";
  const auto predictions_path = dir / "predictions.jsonl";
  std::ifstream mis(metrics_path);
  std::ifstream pis(predictions_path);
  if (!mis || !pis) throw ArtifactError("no report bundle in " + dir.string());
  MetricsReport report;
  try {
    const auto m = nlohmann::json::parse(mis);
    report.model = m.at("model").get<std::string>();
    report.facility = m.at("facility").get<std::string>();
    for (const auto& f : m.at("folds")) {
      FoldMetrics fm;
      fm.fold = f.at("fold").get<int>();
      fm.ok = f.at("ok").get<bool>();
      fm.n = f.at("n").get<std::size_t>();
      if (fm.ok) {
        fm.mae = f.at("mae").get<double>();
        fm.rmse = f.at("rmse").get<double>();
        fm.cr = f.at("cr").get<double>();
        fm.pop = f.at("pop").get<double>();
        fm.selected = f.value("selected", "");
      } else {
        fm.error = f.value("error", "");
      }
      report.folds.push_back(fm);
    }
    const auto& avg = m.at("average");
    report.mae = avg.at("mae").get<double>();
    report.rmse = avg.at("rmse").get<double>();
    report.cr = avg.at("cr").get<double>();
    report.pop = avg.at("pop").get<double>();
    report.config_digest = m.value("config_digest", "");
    report.data_digest = m.value("data_digest", "");
    report.notes = m.value("notes", std::vector<std::string>{});
    std::string line;
    while (std::getline(pis, line)) {
      if (line.empty()) continue;
      const auto p = nlohmann::json::parse(line);
      report.predictions.push_back({p.at("id").get<std::string>(), p.at("cmf").get<double>(),
                                    p.at("cmf_hat").get<double>(), p.at("fold").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError("malformed report bundle in " + dir.string() + ": " + e.what());
  }
  return report;
}

std::string dataset_digest(const Dataset& dataset) {
  std::string all;
  for (const auto& r : dataset.records()) all += to_json(r).dump() + "\n";
  return sha256_hex(all).substr(0, 16);
}

}  // namespace cmf
