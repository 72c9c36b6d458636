#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>
#include <string>
#include <vector>

#include "ufd/cli.h"
#include "ufd/error.h"
#include "ufd/feature_bank.h"
#include "ufd/linear_probe.h"
#include "ufd/metrics.h"
#include "ufd/nn_classifier.h"

namespace py = pybind11;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  if (o.is_none()) return nlohmann::json::object();
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<std::vector<float>> rows_of(const F32Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  const auto r = a.unchecked<2>();
  std::vector<std::vector<float>> rows(static_cast<std::size_t>(r.shape(0)));
  for (py::ssize_t i = 0; i < r.shape(0); ++i) rows[i].assign(&r(i, 0), &r(i, 0) + r.shape(1));
  return rows;
}

std::vector<ufd::LabeledScore> labeled(const std::vector<double>& scores, const std::vector<int>& truth) {
  if (scores.size() != truth.size()) throw py::value_error("scores and truth differ in length");
  std::vector<ufd::LabeledScore> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out[i] = {scores[i], truth[i] ? ufd::Label::kFake : ufd::Label::kReal};
  return out;
}

ufd::ApConvention convention_of(const std::string& name) {
  if (name == "step") return ufd::ApConvention::kStep;
  if (name == "interpolated11") return ufd::ApConvention::kInterpolated11;
  throw py::value_error("unknown AP convention: " + name);
}

py::array_t<float> matrix(std::span<const float> data, std::size_t rows, std::size_t cols) {
  py::array_t<float> out({rows, cols});
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Nearest-neighbor and linear-probe fake image detection on frozen features";

  static py::exception<ufd::Error> error_type(m, "UfdError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ufd::Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(std::string(ufd::to_string(e.code())) + ": " + e.what());
      exc.attr("code") = std::string(ufd::to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::enum_<ufd::Label>(m, "Label").value("REAL", ufd::Label::kReal).value("FAKE", ufd::Label::kFake);

  py::class_<ufd::FeatureBank>(m, "FeatureBank")
      .def_property_readonly("dim", &ufd::FeatureBank::dim)
      .def("__len__", &ufd::FeatureBank::size)
      .def("count", &ufd::FeatureBank::count)
      .def_property_readonly("encoder_id", &ufd::FeatureBank::encoder_id)
      .def_property_readonly("layer_id", &ufd::FeatureBank::layer_id)
      .def_property_readonly("metadata", [](const ufd::FeatureBank& b) { return to_py(b.metadata()); })
      .def_property_readonly("raw", [](const ufd::FeatureBank& b) { return matrix(b.raw_matrix(), b.size(), b.dim()); })
      .def_property_readonly("unit", [](const ufd::FeatureBank& b) { return matrix(b.unit_matrix(), b.size(), b.dim()); })
      .def_property_readonly("labels",
                             [](const ufd::FeatureBank& b) {
                               py::array_t<std::uint8_t> out(b.size());
                               for (std::size_t i = 0; i < b.size(); ++i)
                                 out.mutable_at(i) = static_cast<std::uint8_t>(b.label(i));
                               return out;
                             })
      .def_property_readonly("class_ids",
                             [](const ufd::FeatureBank& b) {
                               std::vector<int> v(b.size());
                               for (std::size_t i = 0; i < b.size(); ++i) v[i] = b.class_id(i);
                               return v;
                             })
      .def_property_readonly("source_tags",
                             [](const ufd::FeatureBank& b) {
                               std::vector<std::string> v(b.size());
                               for (std::size_t i = 0; i < b.size(); ++i) v[i] = b.source_tag(i);
                               return v;
                             })
      .def_property_readonly("image_refs",
                             [](const ufd::FeatureBank& b) {
                               std::vector<std::string> v(b.size());
                               for (std::size_t i = 0; i < b.size(); ++i) v[i] = b.image_ref(i);
                               return v;
                             })
      .def("__eq__", [](const ufd::FeatureBank& a, const ufd::FeatureBank& b) { return a == b; });

  m.def(
      "build_bank",
      [](const F32Array& vectors, const std::vector<int>& labels, std::optional<std::vector<int>> class_ids,
         std::optional<std::vector<std::string>> source_tags, std::optional<std::vector<std::string>> image_refs,
         const py::object& metadata) {
        auto rows = rows_of(vectors);
        if (labels.size() != rows.size()) throw py::value_error("labels and vectors differ in length");
        std::vector<ufd::BankRecord> records(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          records[i].vector = std::move(rows[i]);
          records[i].label = labels[i] ? ufd::Label::kFake : ufd::Label::kReal;
          if (class_ids) records[i].class_id = class_ids->at(i);
          if (source_tags) records[i].source_tag = source_tags->at(i);
          if (image_refs) records[i].image_ref = image_refs->at(i);
        }
        return ufd::build_bank(std::move(records), static_cast<std::size_t>(vectors.shape(1)), from_py(metadata));
      },
      py::arg("vectors"), py::arg("labels"), py::arg("class_ids") = py::none(), py::arg("source_tags") = py::none(),
      py::arg("image_refs") = py::none(), py::arg("metadata") = py::none());

  m.def("load_bank", &ufd::load_bank, py::arg("path"));
  m.def("save_bank", &ufd::save_bank, py::arg("bank"), py::arg("path"));
  m.def("encode_bank", [](const ufd::FeatureBank& b) {
    const auto bytes = ufd::encode_bank(b);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_bank", [](const py::bytes& data) {
    const std::string s = data;
    return ufd::decode_bank(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  });
  m.def("encoded_size", &ufd::encoded_size);
  m.def("merge_banks", [](const std::vector<ufd::FeatureBank>& banks) { return ufd::merge_banks(banks); });
  m.def(
      "subsample_bank",
      [](const ufd::FeatureBank& bank, std::optional<std::size_t> total, std::optional<std::size_t> classes,
         std::uint64_t seed) {
        if (total.has_value() == classes.has_value()) throw py::value_error("give exactly one of total and classes");
        ufd::SubsampleSpec spec;
        spec.seed = seed;
        if (total) {
          spec.target_total = *total;
        } else {
          spec.mode = ufd::SubsampleMode::kByClassCount;
          spec.class_count = *classes;
        }
        return ufd::subsample_bank(bank, spec);
      },
      py::arg("bank"), py::arg("total") = py::none(), py::arg("classes") = py::none(), py::arg("seed") = 0);

  m.def(
      "knn_score",
      [](const F32Array& queries, const ufd::FeatureBank& bank, std::size_t k, std::size_t threads) {
        const auto rows = rows_of(queries);
        std::vector<ufd::ScoredPrediction> preds;
        {
          py::gil_scoped_release release;
          preds = ufd::knn_batch(rows, bank, k, threads);
        }
        py::array_t<double> score(preds.size()), d_real(preds.size()), d_fake(preds.size());
        py::array_t<std::uint8_t> decision(preds.size());
        for (std::size_t i = 0; i < preds.size(); ++i) {
          score.mutable_at(i) = preds[i].score_fake;
          d_real.mutable_at(i) = preds[i].d_real_k;
          d_fake.mutable_at(i) = preds[i].d_fake_k;
          decision.mutable_at(i) = static_cast<std::uint8_t>(preds[i].decision);
        }
        py::dict out;
        out["score"] = score;
        out["decision"] = decision;
        out["d_real"] = d_real;
        out["d_fake"] = d_fake;
        return out;
      },
      py::arg("queries"), py::arg("bank"), py::arg("k") = 1, py::arg("threads") = 0);

  m.def("cosine_distance", [](const std::vector<float>& a, const std::vector<float>& b) {
    return ufd::cosine_distance(a, b);
  });

  m.def(
      "average_precision",
      [](const std::vector<double>& scores, const std::vector<int>& truth, const std::string& convention) {
        return ufd::average_precision(labeled(scores, truth), convention_of(convention));
      },
      py::arg("scores"), py::arg("truth"), py::arg("convention") = "step");
  m.def(
      "accuracy_at_threshold",
      [](const std::vector<double>& scores, const std::vector<int>& truth, double threshold) {
        const auto a = ufd::accuracy_at_threshold(labeled(scores, truth), threshold);
        py::dict out;
        out["accuracy"] = a.accuracy;
        out["real_accuracy"] = a.real_accuracy;
        out["fake_accuracy"] = a.fake_accuracy;
        out["balanced_accuracy"] = a.balanced();
        return out;
      },
      py::arg("scores"), py::arg("truth"), py::arg("threshold"));
  m.def(
      "calibrate_threshold",
      [](const std::vector<double>& scores, const std::vector<int>& truth) {
        const auto c = ufd::calibrate_threshold(labeled(scores, truth));
        return py::make_tuple(c.threshold, c.accuracy);
      },
      py::arg("scores"), py::arg("truth"));
  m.def(
      "pr_curve",
      [](const std::vector<double>& scores, const std::vector<int>& truth) {
        std::vector<std::pair<double, double>> out;
        for (const auto& p : ufd::pr_curve(labeled(scores, truth))) out.emplace_back(p.recall, p.precision);
        return out;
      },
      py::arg("scores"), py::arg("truth"));

  py::class_<ufd::LinearModel>(m, "LinearModel")
      .def_static("zeros", &ufd::LinearModel::zeros)
      .def_readwrite("weights", &ufd::LinearModel::weights)
      .def_readwrite("bias", &ufd::LinearModel::bias)
      .def_property_readonly("dim", &ufd::LinearModel::dim)
      .def(
          "predict",
          [](const ufd::LinearModel& model, const F32Array& queries, double threshold) {
            const auto preds = ufd::predict_linear(model, rows_of(queries), threshold);
            py::array_t<double> score(preds.size());
            py::array_t<std::uint8_t> decision(preds.size());
            for (std::size_t i = 0; i < preds.size(); ++i) {
              score.mutable_at(i) = preds[i].score;
              decision.mutable_at(i) = static_cast<std::uint8_t>(preds[i].decision);
            }
            return py::make_tuple(score, decision);
          },
          py::arg("queries"), py::arg("threshold") = 0.5)
      .def("to_json", [](const ufd::LinearModel& model) { return to_py(ufd::model_to_json(model)); });

  m.def(
      "train_linear",
      [](const ufd::FeatureBank& bank, double learning_rate, std::size_t batch_size, std::size_t epochs,
         std::uint64_t seed, std::size_t patience, double val_fraction) {
        ufd::TrainConfig config;
        config.learning_rate = learning_rate;
        config.batch_size = batch_size;
        config.max_epochs = epochs;
        config.seed = seed;
        config.early_stop_patience = patience;
        config.val_fraction = val_fraction;
        auto [model, report] = ufd::train_linear(bank, config);
        return py::make_tuple(std::move(model), to_py(nlohmann::json(report)));
      },
      py::arg("bank"), py::arg("learning_rate") = 1e-3, py::arg("batch_size") = 256, py::arg("epochs") = 200,
      py::arg("seed") = 0, py::arg("patience") = 10, py::arg("val_fraction") = 0.1);
  m.def("save_model", &ufd::save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &ufd::load_model, py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int status = ufd::run_cli(args, out, err);
        return py::make_tuple(status, out.str(), err.str());
      },
      py::arg("args"));
}
