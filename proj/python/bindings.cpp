#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/judge.hpp"
#include "maskjudge/metrics.hpp"
#include "maskjudge/png_io.hpp"
#include "maskjudge/runner.hpp"
#include "maskjudge/saliency.hpp"

namespace py = pybind11;
using namespace maskjudge;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

AttentionMap to_map(const DoubleArray& a) {
  if (a.ndim() != 2) throw Error(ErrorKind::Dimension, "attention map must be a 2-D array");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  return AttentionMap(w, h, std::vector<double>(a.data(), a.data() + w * h));
}

DoubleArray from_values(std::size_t w, std::size_t h, std::span<const double> v) {
  DoubleArray out({h, w});
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
  return out;
}

RasterImage to_raster(const ByteArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw Error(ErrorKind::Dimension, "image must be HxW or HxWxC");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  const std::size_t c = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
  RasterImage img(w, h, c, std::vector<std::uint8_t>(a.data(), a.data() + w * h * c));
  img.validate();
  return img;
}

ByteArray from_raster(const RasterImage& img) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width)};
  if (img.channels != 1) shape.push_back(static_cast<py::ssize_t>(img.channels));
  ByteArray out(shape);
  std::memcpy(out.mutable_data(), img.samples.data(), img.samples.size());
  return out;
}

py::dict matrix_dict(const metrics::ConfusionMatrix& m) {
  py::dict d;
  d["n"] = m.n;
  d["ch"] = m.ch;
  d["cl"] = m.cl;
  d["wh"] = m.wh;
  d["wl"] = m.wl;
  d["ch_pct"] = m.ch_pct;
  d["cl_pct"] = m.cl_pct;
  d["wh_pct"] = m.wh_pct;
  d["wl_pct"] = m.wl_pct;
  d["avg_score"] = m.avg_score;
  d["err_pct"] = m.err_pct;
  d["dominant"] = std::string(metrics::stage_name(m.dominant()));
  return d;
}

runner::RunConfig make_config(const std::optional<std::filesystem::path>& config,
                              const std::map<std::string, std::string>& overrides) {
  runner::RunConfig cfg;
  if (config) runner::apply_config(KeyValueConfig::load(*config), cfg);
  KeyValueConfig extra;
  for (const auto& [k, v] : overrides) extra.set(k, v);
  runner::apply_config(extra, cfg);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_maskjudge, m) {
  m.doc() = "maskjudge core bindings";
  m.attr("__version__") = std::string(runner::version());

  static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("activate", [](double v, double alpha, double beta) { return activate(v, MaskParams{alpha, beta}); },
        py::arg("v"), py::arg("alpha") = 25.0, py::arg("beta") = 0.4);

  m.def(
      "activate_mask",
      [](const DoubleArray& map, double alpha, double beta) {
        MaskParams p{alpha, beta};
        p.validate();
        const Mask mask = activate_mask(to_map(map), p);
        return from_values(mask.width(), mask.height(), mask.values());
      },
      py::arg("map"), py::arg("alpha") = 25.0, py::arg("beta") = 0.4);

  m.def(
      "apply_mask",
      [](const ByteArray& image, const DoubleArray& mask) {
        if (mask.ndim() != 2) throw Error(ErrorKind::Dimension, "mask must be a 2-D array");
        const Mask mk(static_cast<std::size_t>(mask.shape(1)), static_cast<std::size_t>(mask.shape(0)),
                      std::vector<double>(mask.data(), mask.data() + mask.size()));
        return from_raster(apply_mask(to_raster(image), mk).image);
      },
      py::arg("image"), py::arg("mask"));

  m.def(
      "resize_map",
      [](const DoubleArray& map, std::size_t width, std::size_t height) {
        const AttentionMap out = resize_map(to_map(map), width, height);
        return from_values(out.width(), out.height(), out.values());
      },
      py::arg("map"), py::arg("width"), py::arg("height"));

  m.def(
      "decode_png",
      [](const py::bytes& data) {
        const std::string s = data;
        return from_raster(png::decode_raster(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
      },
      py::arg("data"));

  m.def(
      "encode_png",
      [](const ByteArray& image) {
        const auto bytes = png::encode(to_raster(image));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("image"));

  m.def(
      "mask_file",
      [](const std::filesystem::path& image, const std::filesystem::path& map, const std::filesystem::path& out,
         double alpha, double beta) {
        MaskParams p{alpha, beta};
        p.validate();
        const RasterImage img = png::decode_raster(io::read_bytes(image));
        const AttentionMap am = resize_map(load_attention_map_file(map.string()), img.width, img.height);
        io::write_atomic(out, png::encode(apply_mask(img, activate_mask(am, p)).image));
      },
      py::arg("image"), py::arg("map"), py::arg("out"), py::arg("alpha") = 25.0, py::arg("beta") = 0.4);

  m.def(
      "build_prompt",
      [](const std::string& label, const std::string& variant) {
        if (variant == "masked") return judge::build_prompt(judge::builtin_template(judge::PromptVariant::Masked), label);
        if (variant == "heatmap") return judge::build_prompt(judge::builtin_template(judge::PromptVariant::Heatmap), label);
        return judge::build_prompt(judge::load_template_file(variant), label);
      },
      py::arg("label"), py::arg("variant") = "masked");

  m.def(
      "parse_assessment",
      [](const std::string& raw) {
        const judge::VlmAssessment a = judge::parse_assessment(raw);
        py::dict d;
        d["evaluation"] = a.evaluation;
        d["justification"] = a.justification;
        d["score"] = a.score;
        return d;
      },
      py::arg("raw"));

  m.def(
      "format_assessment",
      [](const std::string& evaluation, const std::string& justification, int score) {
        judge::VlmAssessment a;
        a.evaluation = evaluation;
        a.justification = justification;
        a.score = score;
        return judge::format_assessment(a);
      },
      py::arg("evaluation"), py::arg("justification"), py::arg("score"));

  m.def(
      "confusion_matrix",
      [](const std::vector<std::tuple<std::string, std::string, int>>& rows, int threshold) {
        std::vector<metrics::SampleResult> results;
        results.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const auto& [pred, truth, score] = rows[i];
          results.push_back(metrics::SampleResult::make(std::to_string(i), pred, truth, score));
        }
        metrics::Threshold t{threshold};
        t.validate();
        return matrix_dict(metrics::build_confusion_matrix(results, t));
      },
      py::arg("rows"), py::arg("threshold") = 3,
      "rows: (predicted_label, true_label, score) tuples");

  m.def(
      "pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return metrics::pearson(x, y); },
      py::arg("x"), py::arg("y"));

  m.def(
      "acceptance_rate",
      [](const std::vector<bool>& accepted) {
        auto flags = std::make_unique<bool[]>(accepted.size());
        std::copy(accepted.begin(), accepted.end(), flags.get());
        return metrics::acceptance_rate(std::span<const bool>(flags.get(), accepted.size()));
      },
      py::arg("accepted"));

  m.def(
      "load_manifest",
      [](const std::filesystem::path& path) {
        py::list out;
        for (const auto& r : runner::load_manifest(path)) {
          py::dict d;
          d["sample_id"] = r.sample_id;
          d["image_path"] = r.image_path.string();
          d["map_path"] = r.map_path.string();
          d["predicted_label"] = r.predicted_label;
          d["true_label"] = r.true_label;
          out.append(d);
        }
        return out;
      },
      py::arg("path"));

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& manifest, const std::optional<std::filesystem::path>& config,
         const std::map<std::string, std::string>& overrides) {
        const runner::RunConfig cfg = make_config(config, overrides);
        const auto records = runner::load_manifest(manifest);
        runner::RunSummary s;
        {
          py::gil_scoped_release release;
          s = runner::run_pipeline(records, cfg);
        }
        py::dict d;
        d["total"] = s.total;
        d["new_samples"] = s.new_samples;
        d["skipped"] = s.skipped;
        d["failed"] = s.failed;
        d["network_requests"] = s.network_requests;
        d["cache_hits"] = s.cache_hits;
        d["matrix"] = s.matrix ? py::object(matrix_dict(*s.matrix)) : py::none();
        return d;
      },
      py::arg("manifest"), py::arg("config") = py::none(),
      py::arg("overrides") = std::map<std::string, std::string>{},
      "overrides use config-file keys, e.g. {'vlm.endpoint': 'http://...', 'out_dir': 'out'}");

  m.def(
      "emit_report",
      [](const std::filesystem::path& out_dir, int threshold, const std::string& model_label) {
        metrics::Threshold t{threshold};
        t.validate();
        runner::ResultStore store(out_dir);
        const auto files = runner::emit_report(store, t, model_label);
        py::dict d;
        d["json"] = files.json.string();
        d["csv"] = files.csv.string();
        d["summary"] = files.summary.string();
        d["matrix"] = matrix_dict(files.matrix);
        return d;
      },
      py::arg("out_dir"), py::arg("threshold") = 3, py::arg("model_label") = "model");
}
