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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmf/evaluation.hpp"
#include "cmf/pipeline.hpp"
#include "cmf/scenario_text.hpp"
#include "cmf/service.hpp"
#include "cmf/spsf.hpp"
#include "cmf/synthetic.hpp"
#include "cmf/target_encoder.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// Structured values cross the boundary as JSON text; the Python package
// wraps these with json.loads/json.dumps.

std::vector<cmf::ScenarioRecord> records_from(const std::string& text) {
  std::vector<cmf::ScenarioRecord> out;
  for (const auto& r : json::parse(text)) out.push_back(cmf::record_from_json(r));
  return out;
}

std::string records_to(const std::vector<cmf::ScenarioRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(cmf::to_json(r));
  return arr.dump();
}

cmf::PipelineConfig config_from(const std::string& text) {
  return text.empty() ? cmf::PipelineConfig{} : cmf::PipelineConfig::from_json(json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CMF prediction core";

  auto base = py::register_exception<cmf::Error>(m, "CmfError", PyExc_ValueError);
  py::register_exception<cmf::ArtifactError>(m, "ArtifactError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("safety_similarity", &cmf::safety_similarity, py::arg("cmf_i"), py::arg("cmf_j"));
  m.def("mae", [](const std::vector<double>& y, const std::vector<double>& p) { return cmf::mae(y, p); });
  m.def("rmse", [](const std::vector<double>& y, const std::vector<double>& p) { return cmf::rmse(y, p); });
  m.def("consistency_rate",
        [](const std::vector<double>& y, const std::vector<double>& p) { return cmf::consistency_rate(y, p); });
  m.def("pop", [](const std::vector<double>& y, const std::vector<double>& p) { return cmf::pop(y, p); });

  m.def(
      "pseudo_sentence",
      [](const std::string& record, bool render_field_names) {
        const auto r = cmf::record_from_json(json::parse(record));
        auto schema = cmf::FieldSchema::for_facility(r.facility);
        schema.render_field_names = render_field_names;
        return cmf::build_pseudo_sentence(r, schema).text;
      },
      py::arg("record_json"), py::arg("render_field_names") = false);

  m.def(
      "generate_synthetic",
      [](std::size_t records, std::uint64_t seed, double noise_sigma, const std::string& facility,
         double missing_rate) {
        cmf::synthetic::Options o;
        o.records = records;
        o.seed = seed;
        o.noise_sigma = noise_sigma;
        o.facility = cmf::parse_facility(facility);
        o.missing_rate = missing_rate;
        return records_to(cmf::synthetic::generate(o));
      },
      py::arg("records") = 2000, py::arg("seed") = 1, py::arg("noise_sigma") = 0.03,
      py::arg("facility") = "roadway", py::arg("missing_rate") = 0.15);

  m.def(
      "embedding_lookup",
      [](const std::string& path, const std::string& text) -> py::object {
        const auto table = cmf::EmbeddingTable::load(path);
        const auto* v = table.find(text);
        if (!v) return py::none();
        return py::cast(std::vector<double>(v->data(), v->data() + v->size()));
      },
      py::arg("table_path"), py::arg("text"));

  py::class_<cmf::TargetEncoderState>(m, "TargetEncoder")
      .def_static(
          "fit",
          [](const std::string& records, const std::string& facility, const std::vector<std::string>& features,
             double smoothing) {
            return cmf::TargetEncoderState::fit(records_from(records), cmf::parse_facility(facility), features,
                                                smoothing);
          },
          py::arg("records_json"), py::arg("facility"), py::arg("features"), py::arg("smoothing") = 100.0)
      .def("encode_value",
           [](const cmf::TargetEncoderState& s, const std::string& f, const std::string& c) {
             return s.encode_value(f, c);
           })
      .def_property_readonly("global_mean", &cmf::TargetEncoderState::global_mean)
      .def_property_readonly("features", &cmf::TargetEncoderState::features)
      .def("to_json", [](const cmf::TargetEncoderState& s) { return s.to_json().dump(); });

  m.def(
      "train_bundle",
      [](const std::string& records, const std::string& facility, const std::string& out_dir,
         const std::string& config) {
        const cmf::Dataset ds(cmf::parse_facility(facility), records_from(records));
        const auto cfg = config_from(config);
        py::gil_scoped_release release;
        cmf::CmfPipeline p(cfg, cmf::make_base_backbone(cfg));
        p.prepare(ds);
        p.fit(ds, cmf::HyperParams{cfg.train.hidden, cfg.train.learning_rate});
        p.export_bundle(out_dir, ds);
      },
      py::arg("records_json"), py::arg("facility"), py::arg("out_dir"), py::arg("config_json") = "");

  m.def(
      "evaluate",
      [](const std::string& records, const std::string& facility, const std::string& model,
         const std::string& config) {
        const cmf::Dataset ds(cmf::parse_facility(facility), records_from(records));
        const auto cfg = config_from(config);
        py::gil_scoped_release release;
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
        return report.to_json().dump();
      },
      py::arg("records_json"), py::arg("facility"), py::arg("model") = "cmf", py::arg("config_json") = "");

  py::class_<cmf::service::Predictor, std::shared_ptr<cmf::service::Predictor>>(m, "Predictor")
      .def_static("load", [](const std::string& dir) {
        return std::make_shared<cmf::service::Predictor>(cmf::service::Predictor::load(dir));
      })
      .def("predict",
           [](const cmf::service::Predictor& p, const std::string& request) {
             return p.predict(cmf::service::parse_request(json::parse(request))).to_json().dump();
           })
      .def_property_readonly("model_version", &cmf::service::Predictor::model_version)
      .def("model_info", [](const cmf::service::Predictor& p) { return p.model_info().dump(); });

  py::class_<cmf::service::Service>(m, "Service")
      .def(py::init([](std::shared_ptr<cmf::service::Predictor> p, std::size_t batch_cap) {
             return cmf::service::Service(p, cmf::service::ServiceOptions{batch_cap});
           }),
           py::arg("predictor"), py::arg("batch_cap") = 256)
      .def("predict",
           [](const cmf::service::Service& s, const std::string& body) {
             const auto r = s.predict(body);
             return py::make_tuple(r.status, r.body.dump());
           })
      .def("predict_batch",
           [](const cmf::service::Service& s, const std::string& body) {
             const auto r = s.predict_batch(body);
             return py::make_tuple(r.status, r.body.dump());
           })
      .def("model",
           [](const cmf::service::Service& s) {
             const auto r = s.model();
             return py::make_tuple(r.status, r.body.dump());
           })
      .def("health", [](const cmf::service::Service& s) {
        const auto r = s.health();
        return py::make_tuple(r.status, r.body.dump());
      });
}
