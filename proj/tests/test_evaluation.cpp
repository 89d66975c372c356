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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "cmf/evaluation.hpp"
#include "cmf/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cmf;

TEST_CASE("metric hand examples") {
  CHECK(mae(std::vector<double>{1, 1}, std::vector<double>{1, 1}) == 0.0);
  CHECK(rmse(std::vector<double>{1, 1}, std::vector<double>{1, 1}) == 0.0);
  CHECK(mae(std::vector<double>{1.0, 1.0}, std::vector<double>{0.8, 1.2}) == doctest::Approx(0.2));
  CHECK(rmse(std::vector<double>{1.0, 1.0}, std::vector<double>{0.8, 1.2}) == doctest::Approx(0.2));
  CHECK(mae(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 1.4}) == doctest::Approx(0.2));
  CHECK(rmse(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 1.4}) == doctest::Approx(0.2828).epsilon(1e-4));
}

TEST_CASE("consistency rate examples") {
  CHECK(consistency_rate(std::vector<double>{0.9}, std::vector<double>{1.1}) == 0.0);
  CHECK(consistency_rate(std::vector<double>{0.9}, std::vector<double>{1.0}) == 1.0);
  CHECK(consistency_rate(std::vector<double>{1.0}, std::vector<double>{1.3}) == 1.0);
  CHECK(consistency_rate(std::vector<double>{0.5, 1.5, 0.9, 1.2}, std::vector<double>{0.7, 1.2, 1.1, 1.3}) == 0.75);
}

TEST_CASE("proportion of precise predictions examples") {
  CHECK(pop(std::vector<double>{1.0, 0.5, 1.2}, std::vector<double>{1.04, 0.54, 1.16}) == 100.0);
  CHECK(pop(std::vector<double>{1.0}, std::vector<double>{1.05}) == 0.0);
  CHECK(pop(std::vector<double>{0.5}, std::vector<double>{0.55}) == 0.0);
  CHECK(pop(std::vector<double>{1.0, 1.0, 1.0, 1.0}, std::vector<double>{1.0, 1.049, 1.051, 1.2}) == 50.0);
}

TEST_CASE("metric inputs are validated") {
  CHECK_THROWS_AS(mae(std::vector<double>{}, std::vector<double>{}), Error);
  CHECK_THROWS_AS(rmse(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
}

TEST_CASE("property: metrics match brute-force oracles, rmse >= mae, ranges hold") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.01, 2.0);
  std::uniform_int_distribution<int> len(1, 100);
  for (int t = 0; t < 500; ++t) {
    const int n = len(rng);
    std::vector<double> y(n), p(n);
    for (int i = 0; i < n; ++i) {
      y[i] = u(rng);
      p[i] = u(rng);
    }
    CHECK(std::fabs(mae(y, p) - oracle::mae(y, p)) < 1e-9);
    CHECK(std::fabs(rmse(y, p) - oracle::rmse(y, p)) < 1e-9);
    CHECK(std::fabs(consistency_rate(y, p) - oracle::cr(y, p)) < 1e-9);
    CHECK(std::fabs(pop(y, p) - oracle::pop(y, p)) < 1e-9);
    CHECK(rmse(y, p) >= mae(y, p) - 1e-15);
    CHECK(consistency_rate(y, p) >= 0.0);
    CHECK(consistency_rate(y, p) <= 1.0);
    CHECK(pop(y, p) >= 0.0);
    CHECK(pop(y, p) <= 100.0);
  }
}

TEST_CASE("fold split invariants") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 53 + seed;
    const auto split = FoldSplit::make(n, 5, 5, seed);
    std::vector<int> tested(n, 0);
    std::vector<std::size_t> sizes;
    for (int k = 0; k < 5; ++k) {
      const auto train = split.outer_train(k);
      const auto test = split.outer_test(k);
      sizes.push_back(test.size());
      CHECK(train.size() + test.size() == n);
      std::set<std::size_t> test_set(test.begin(), test.end());
      for (auto i : train) CHECK(test_set.count(i) == 0);
      for (auto i : test) ++tested[i];
      std::vector<int> inner_seen(n, 0);
      for (int j = 0; j < 5; ++j) {
        for (auto i : split.inner_test(k, j)) {
          CHECK(test_set.count(i) == 0);
          ++inner_seen[i];
        }
        for (auto i : split.inner_train(k, j)) CHECK(test_set.count(i) == 0);
      }
      for (auto i : train) CHECK(inner_seen[i] == 1);
    }
    CHECK(std::all_of(tested.begin(), tested.end(), [](int c) { return c == 1; }));
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    CHECK(FoldSplit::make(n, 5, 5, seed).outer == split.outer);
  }
  CHECK_THROWS_AS(FoldSplit::make(3, 5, 5, 1), Error);
}

namespace {

Dataset constant_dataset(std::size_t n, double y) {
  Dataset ds(Facility::kRoadway);
  for (std::size_t i = 0; i < n; ++i) ds.add(testing::record("r" + std::to_string(i), "x", y));
  return ds;
}

PipelineConfig fast_config() {
  PipelineConfig cfg;
  cfg.finetune = false;
  cfg.train.epochs = 15;
  cfg.train.patience = 5;
  cfg.grid = {HyperParams{{8}, 1e-2}};
  return cfg;
}

}  // namespace

TEST_CASE("constant pipeline on constant targets is perfect") {
  const auto ds = constant_dataset(40, 1.0);
  NestedCvOptions opts;
  const auto report =
      nested_cv(ds, [] { return std::make_unique<ConstantPipeline>(1.0); }, {HyperParams{}}, opts);
  CHECK(report.complete());
  CHECK(report.mae == 0.0);
  CHECK(report.cr == 1.0);
  CHECK(report.pop == 100.0);
  CHECK(report.predictions.size() == 40);
}

TEST_CASE("averages are means of the fold metrics") {
  synthetic::Options o;
  o.records = 80;
  const Dataset ds(Facility::kRoadway, synthetic::generate(o));
  const auto report = knn_report(ds, fast_config());
  double m = 0, r = 0;
  for (const auto& f : report.folds) {
    m += f.mae;
    r += f.rmse;
    CHECK(f.rmse >= f.mae);
  }
  CHECK(report.mae == doctest::Approx(m / 5));
  CHECK(report.rmse == doctest::Approx(r / 5));
  CHECK(report.model == "non-encoding");
}

TEST_CASE("a failing fold is reported as partial coverage") {
  struct Flaky : Pipeline {
    std::string name() const override { return "flaky"; }
    void fit(const Dataset& train, const HyperParams&) override { n = train.size(); }
    std::vector<double> predict(const Dataset& test) const override {
      if (test.records().front().id == "r0" || n == 0) throw Error("boom");
      return std::vector<double>(test.size(), 1.0);
    }
    std::size_t n = 0;
  };
  const auto ds = constant_dataset(30, 1.0);
  const auto report = nested_cv(ds, [] { return std::make_unique<Flaky>(); }, {HyperParams{}}, {});
  CHECK_FALSE(report.complete());
  int failed = 0;
  for (const auto& f : report.folds) failed += !f.ok;
  CHECK(failed >= 1);
  CHECK_FALSE(report.notes.empty());
}

TEST_CASE("sentinel categories present only in test folds get the global mean") {
  synthetic::Options o;
  o.records = 60;
  o.seed = 3;
  auto records = synthetic::generate(o);
  const auto split = FoldSplit::make(records.size(), 5, 5, 42);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].context["area_type"] = "SENTINEL-" + std::to_string(split.outer[i]);
  }
  const Dataset ds(Facility::kRoadway, records);
  auto cfg = fast_config();
  int audited = 0;
  NestedCvOptions opts;
  opts.seed = 42;
  opts.observer = [&](int fold, const Pipeline& p, const Dataset& train, const Dataset& test) {
    const auto& cmfp = dynamic_cast<const CmfPipeline&>(p);
    const auto& te = cmfp.encoder_state();
    const std::string sentinel = "SENTINEL-" + std::to_string(fold);
    CHECK(te.categories("area_type").count(sentinel) == 0);
    CHECK(te.encode_value("area_type", sentinel) == te.global_mean());
    double sum = 0;
    for (const auto& r : train.records()) sum += r.cmf;
    CHECK(te.global_mean() == doctest::Approx(sum / train.size()).epsilon(1e-12));
    for (const auto& r : test.records()) CHECK(r.get("area_type") == sentinel);
    ++audited;
  };
  const auto base = make_base_backbone(cfg);
  const auto report = nested_cv(
      ds, [&] { return std::make_unique<CmfPipeline>(cfg, base); }, cfg.grid, opts);
  CHECK(report.complete());
  CHECK(audited == 5);
}

TEST_CASE("knn baseline examples") {
  Dataset train(Facility::kRoadway);
  for (int i = 0; i < 10; ++i) train.add(testing::record("t" + std::to_string(i), "Add lighting", 0.8, {{"area_type", "Rural"}}));
  for (int i = 0; i < 10; ++i) train.add(testing::record("u" + std::to_string(i), "Add barrier", 1.4, {{"area_type", "Urban"}}));
  Dataset test(Facility::kRoadway);
  test.add(testing::record("q", "Add lighting", 1.0, {{"area_type", "Rural"}}));
  CHECK(knn_baseline(train, test, 10)[0] == doctest::Approx(0.8));

  Dataset small(Facility::kRoadway);
  for (int i = 0; i < 5; ++i) small.add(testing::record("s" + std::to_string(i), "x", 0.5 + 0.1 * i));
  CHECK(knn_baseline(small, test, 10)[0] == doctest::Approx(0.7));
}

TEST_CASE("knn neighbor set matches an exhaustive Hamming oracle") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> v(0, 2);
  std::uniform_real_distribution<double> y(0.3, 1.7);
  const std::vector<std::string> fields = {"area_type", "crash_type", "country"};
  auto make = [&](const std::string& id) {
    std::map<std::string, std::string> ctx;
    for (const auto& f : fields) ctx[f] = f + std::to_string(v(rng));
    return testing::record(id, "same", y(rng), ctx);
  };
  Dataset train(Facility::kRoadway);
  for (int i = 0; i < 30; ++i) train.add(make("t" + std::to_string(i)));
  Dataset test(Facility::kRoadway);
  for (int i = 0; i < 10; ++i) test.add(make("q" + std::to_string(i)));
  const auto got = knn_baseline(train, test, 4);
  for (std::size_t q = 0; q < test.size(); ++q) {
    std::vector<std::pair<int, std::size_t>> d;
    for (std::size_t i = 0; i < train.size(); ++i) {
      int dist = 0;
      for (const auto& f : fields) dist += train.records()[i].get(f) != test.records()[q].get(f);
      d.push_back({dist, i});
    }
    std::sort(d.begin(), d.end());
    double mean = 0;
    for (int k = 0; k < 4; ++k) mean += train.records()[d[k].second].cmf;
    CHECK(got[q] == doctest::Approx(mean / 4));
  }
}

TEST_CASE("knn keys bin years into five-year bins") {
  const auto schema = FieldSchema::for_facility(Facility::kRoadway);
  const auto a = knn_keys(testing::record("a", "x", 1, {}, 2001, 2004), schema);
  const auto b = knn_keys(testing::record("b", "x", 1, {}, 2003, 2003), schema);
  const auto c = knn_keys(testing::record("c", "x", 1, {}, 2006, 2004), schema);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("non-tuning baseline is labeled and runs offline") {
  synthetic::Options o;
  o.records = 50;
  const Dataset ds(Facility::kRoadway, synthetic::generate(o));
  auto cfg = fast_config();
  cfg.folds = 2;
  cfg.inner_folds = 2;
  const auto report = pretrained_baseline(ds, EncoderBackbone::hashing(), cfg);
  CHECK(report.model == "non-tuning");
  CHECK(report.complete());
}

TEST_CASE("subgroup report partitions predictions") {
  synthetic::Options o;
  o.records = 120;
  const Dataset ds(Facility::kRoadway, synthetic::generate(o));
  const auto report = knn_report(ds, fast_config());
  const auto groups = subgroup_report(report, ds, {"countermeasure_category", "area_type"});
  std::size_t total = 0;
  for (const auto& row : groups.rows) total += row.n;
  CHECK(total == report.predictions.size());
  CHECK_THROWS_AS(subgroup_report(report, ds, {"no_such_field"}), Error);
  CHECK(groups.to_csv().rfind("countermeasure_category,area_type,n,mae,rmse,cr,pop", 0) == 0);
  CHECK(groups.to_grid_csv().find("row,column,n,mae") != std::string::npos);

  SUBCASE("a single group reproduces the pooled metrics") {
    Dataset same(Facility::kRoadway);
    for (auto r : ds.records()) {
      r.context["countermeasure_category"] = "One";
      same.add(r);
    }
    const auto one = subgroup_report(report, same, {"countermeasure_category"});
    REQUIRE(one.rows.size() == 1);
    std::vector<double> y, p;
    for (const auto& row : report.predictions) {
      y.push_back(row.cmf);
      p.push_back(row.cmf_hat);
    }
    CHECK(one.rows[0].mae == doctest::Approx(mae(y, p)));
    CHECK(one.rows[0].cr == doctest::Approx(consistency_rate(y, p)));
  }
}

TEST_CASE("structured case study filters predictions") {
  Dataset ds(Facility::kRoadway);
  ds.add(testing::record("a", "Widen paved shoulder from 3 ft to 4 ft", 0.9));
  ds.add(testing::record("b", "Increase shoulder width from 2 ft to 6 ft", 0.8));
  ds.add(testing::record("c", "Install lighting", 0.7));
  MetricsReport report;
  report.predictions = {{"a", 0.9, 0.85, 0}, {"b", 0.8, 0.82, 1}, {"c", 0.7, 0.75, 2}};
  const auto cs = case_study_structured(report, ds);
  REQUIRE(cs.rows.size() == 2);
  CHECK(cs.warning.empty());
  for (const auto& r : cs.rows) CHECK((r.id == "a" || r.id == "b"));
  CHECK(cs.scatter_csv().rfind("id,cmf,cmf_hat\n", 0) == 0);

  const auto none = case_study_structured(report, ds, [](const ScenarioRecord&) { return false; });
  CHECK(none.rows.empty());
  CHECK_FALSE(none.warning.empty());
}

TEST_CASE("report bundle is written and read back") {
  testing::TempDir dir;
  synthetic::Options o;
  o.records = 40;
  const Dataset ds(Facility::kRoadway, synthetic::generate(o));
  const auto report = knn_report(ds, fast_config());
  write_report_bundle(dir / "r", report, subgroup_report(report, ds, {"countermeasure_category"}),
                      fast_config().to_json());
  for (const char* f : {"metrics.json", "predictions.jsonl", "subgroups.csv", "config.json"}) {
    CHECK(std::filesystem::exists(dir / "r" / f));
  }
  const auto back = read_report_bundle(dir / "r");
  CHECK(back.mae == report.mae);
  CHECK(back.predictions.size() == report.predictions.size());
  CHECK(back.folds.size() == 5);
  CHECK_THROWS_AS(read_report_bundle(dir / "missing"), ArtifactError);
}
