#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "depthkit/alignment.hpp"
#include "depthkit/benchmark.hpp"
#include "depthkit/curation.hpp"
#include "depthkit/depthio.hpp"
#include "depthkit/error.hpp"
#include "depthkit/losses.hpp"
#include "depthkit/metrics.hpp"
#include "depthkit/synthgen.hpp"

namespace py = pybind11;
using namespace depthkit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

DepthKind parse_kind(const std::string& kind) {
  if (kind == "inverse") return DepthKind::InverseRelative;
  if (kind == "metric") return DepthKind::MetricMeters;
  throw Error(ErrorCode::InvalidArgument, "kind must be 'inverse' or 'metric', got '" + kind + "'");
}

const char* kind_name(DepthKind k) { return k == DepthKind::MetricMeters ? "metric" : "inverse"; }

/// NaN, infinities and zeros in `values` are invalid; `valid` narrows further.
DepthMap to_map(const FloatArray& values, const std::optional<BoolArray>& valid, DepthKind kind) {
  if (values.ndim() != 2) throw Error(ErrorCode::InvalidArgument, "depth arrays must be 2-D (height, width)");
  const int h = int(values.shape(0)), w = int(values.shape(1));
  std::vector<float> v(values.data(), values.data() + values.size());
  DepthMap map = DepthMap::from_values(w, h, std::move(v), kind);
  if (valid) {
    if (valid->ndim() != 2 || valid->shape(0) != h || valid->shape(1) != w) {
      throw Error(ErrorCode::InvalidArgument, "mask shape does not match depth shape");
    }
    const bool* m = valid->data();
    for (std::size_t i = 0; i < map.valid.size(); ++i) {
      if (!m[i]) map.valid.set(i, false);
    }
  }
  return map;
}

ValidMask to_mask(const DepthMap& a, const DepthMap& b, const std::optional<BoolArray>& mask) {
  ValidMask m = a.valid & b.valid;
  if (mask) {
    if (mask->size() != py::ssize_t(m.size())) throw Error(ErrorCode::InvalidArgument, "mask shape does not match");
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!mask->data()[i]) m.set(i, false);
    }
  }
  return m;
}

py::array_t<float> values_of(const DepthMap& m) {
  py::array_t<float> out({m.height, m.width});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

py::array_t<bool> mask_of(const ValidMask& m) {
  py::array_t<bool> out({m.height(), m.width()});
  for (std::size_t i = 0; i < m.size(); ++i) out.mutable_data()[i] = m[i];
  return out;
}

py::dict metrics_dict(const MetricValues& v) {
  py::dict d;
  d["abs_rel"] = v.abs_rel;
  d["delta1"] = v.delta1;
  d["delta2"] = v.delta2;
  d["delta3"] = v.delta3;
  d["rmse"] = v.rmse;
  d["rmse_log"] = v.rmse_log;
  d["log10"] = v.log10;
  return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "depthkit core bindings";
  static py::handle error_type = py::exception<Error>(m, "DepthkitError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def(
      "load_depth",
      [](const std::filesystem::path& path, const std::string& kind) {
        const DepthMap d = load_depth(path, format_from_path(path), parse_kind(kind));
        return py::make_tuple(values_of(d), mask_of(d.valid), kind_name(d.kind));
      },
      py::arg("path"), py::arg("kind") = "inverse",
      "Reads .pfm, .png (16-bit) or .dbf; returns (values, valid, kind).");

  m.def(
      "save_depth",
      [](const std::filesystem::path& path, const FloatArray& values, std::optional<BoolArray> valid,
         const std::string& kind) {
        save_depth(to_map(values, valid, parse_kind(kind)), path, format_from_path(path));
      },
      py::arg("path"), py::arg("values"), py::arg("valid") = py::none(), py::arg("kind") = "inverse");

  m.def(
      "fit_lsq",
      [](const FloatArray& pred, const FloatArray& ref, std::optional<BoolArray> mask) {
        const DepthMap p = to_map(pred, std::nullopt, DepthKind::InverseRelative);
        const DepthMap r = to_map(ref, std::nullopt, DepthKind::InverseRelative);
        const auto f = fit_scale_shift_lsq(p, r, to_mask(p, r, mask));
        return py::make_tuple(f.scale, f.shift);
      },
      py::arg("pred"), py::arg("ref"), py::arg("mask") = py::none(),
      "Least-squares (scale, shift) minimising |s * pred + t - ref|^2.");

  m.def(
      "fit_robust",
      [](const FloatArray& pred, const FloatArray& ref, std::optional<BoolArray> mask) {
        const DepthMap p = to_map(pred, std::nullopt, DepthKind::InverseRelative);
        const DepthMap r = to_map(ref, std::nullopt, DepthKind::InverseRelative);
        const auto f = fit_scale_shift_robust(p, r, to_mask(p, r, mask));
        return py::make_tuple(f.scale, f.shift);
      },
      py::arg("pred"), py::arg("ref"), py::arg("mask") = py::none());

  m.def(
      "ssi_loss",
      [](const FloatArray& pred, const FloatArray& ref, std::optional<BoolArray> mask, double trim) {
        const DepthMap p = to_map(pred, std::nullopt, DepthKind::InverseRelative);
        const DepthMap r = to_map(ref, std::nullopt, DepthKind::InverseRelative);
        LossConfig cfg;
        cfg.trim_fraction = trim;
        return ssi_loss(p, r, to_mask(p, r, mask), cfg).loss;
      },
      py::arg("pred"), py::arg("ref"), py::arg("mask") = py::none(), py::arg("trim") = 0.0);

  m.def(
      "gradient_matching_loss",
      [](const FloatArray& pred, const FloatArray& ref, std::optional<BoolArray> mask, int scales) {
        const DepthMap p = to_map(pred, std::nullopt, DepthKind::InverseRelative);
        const DepthMap r = to_map(ref, std::nullopt, DepthKind::InverseRelative);
        LossConfig cfg;
        cfg.gm_scales = scales;
        const auto g = gradient_matching_loss(p, r, to_mask(p, r, mask), cfg);
        return py::make_tuple(g.total, g.per_scale);
      },
      py::arg("pred"), py::arg("ref"), py::arg("mask") = py::none(), py::arg("scales") = 4);

  m.def(
      "combined_loss",
      [](const FloatArray& pred, const FloatArray& ref, std::optional<BoolArray> mask) {
        const DepthMap p = to_map(pred, std::nullopt, DepthKind::InverseRelative);
        const DepthMap r = to_map(ref, std::nullopt, DepthKind::InverseRelative);
        const auto rep = combined_loss(p, r, to_mask(p, r, mask));
        py::dict d;
        d["ssi"] = rep.ssi;
        d["gm"] = rep.gm;
        d["gm_per_scale"] = rep.gm_per_scale;
        d["total"] = rep.total;
        return d;
      },
      py::arg("pred"), py::arg("ref"), py::arg("mask") = py::none());

  m.def(
      "evaluate",
      [](const FloatArray& pred, const FloatArray& gt, std::optional<BoolArray> mask,
         const std::string& pred_kind, const std::string& alignment, const std::string& space) {
        const DepthMap p = to_map(pred, mask, parse_kind(pred_kind));
        const DepthMap g = to_map(gt, mask, DepthKind::MetricMeters);
        EvalConfig cfg;
        if (alignment == "robust") cfg.alignment = AlignmentMethod::Robust;
        else if (alignment != "lsq") throw Error(ErrorCode::InvalidArgument, "alignment must be 'lsq' or 'robust'");
        if (space == "depth") cfg.space = AlignSpace::Depth;
        else if (space != "inv") throw Error(ErrorCode::InvalidArgument, "space must be 'inv' or 'depth'");
        const auto row = evaluate_image(p, g, cfg);
        py::dict d = metrics_dict(row.values);
        d["scale"] = row.alignment.scale;
        d["shift"] = row.alignment.shift;
        d["valid_pixels"] = row.valid_pixels;
        d["clamped_pixels"] = row.clamped_pixels;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none(), py::arg("pred_kind") = "inverse",
      py::arg("alignment") = "lsq", py::arg("space") = "inv",
      "Aligns pred to metric gt and returns AbsRel, delta1-3, RMSE, RMSE log and log10.");

  m.def(
      "curation_mask",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> loss, std::optional<BoolArray> mask,
         double n) {
        if (loss.ndim() != 2) throw Error(ErrorCode::InvalidArgument, "loss must be 2-D");
        ScalarMap l(int(loss.shape(1)), int(loss.shape(0)));
        std::copy(loss.data(), loss.data() + loss.size(), l.values.begin());
        ValidMask valid(l.width, l.height, true);
        if (mask) {
          for (std::size_t i = 0; i < valid.size(); ++i) valid.set(i, mask->data()[i]);
        }
        CurationConfig cfg;
        cfg.n = n;
        return mask_of(mask_top_loss(l, valid, cfg).first);
      },
      py::arg("loss"), py::arg("mask") = py::none(), py::arg("n") = 0.10,
      "Keeps all but the floor(n * valid) highest-loss valid pixels.");

  m.def(
      "render_random_scene",
      [](std::uint64_t seed, int width, int height) {
        const auto r = synth::render(synth::random_scene(seed, width, height));
        py::array_t<std::uint8_t> rgb({height, width, 3});
        std::copy(r.rgb.begin(), r.rgb.end(), rgb.mutable_data());
        py::array_t<int> ids({height, width});
        std::copy(r.primitive_id.begin(), r.primitive_id.end(), ids.mutable_data());
        py::dict d;
        d["depth"] = values_of(r.depth);
        d["valid"] = mask_of(r.depth.valid);
        d["rgb"] = rgb;
        d["primitive_id"] = ids;
        return d;
      },
      py::arg("seed"), py::arg("width") = 64, py::arg("height") = 48);

  m.def(
      "fake_model",
      [](const FloatArray& depth, std::optional<BoolArray> valid, const std::string& spec) {
        const DepthMap out = synth::fake_model(to_map(depth, valid, DepthKind::MetricMeters),
                                               synth::FakeModel::parse(spec));
        return py::make_tuple(values_of(out), mask_of(out.valid), kind_name(out.kind));
      },
      py::arg("depth"), py::arg("valid") = py::none(), py::arg("spec") = "identity",
      "Transforms metric depth, e.g. spec='affine(2,3)'; returns (values, valid, kind).");

  m.def(
      "pair_accuracy",
      [](const FloatArray& pred, const std::string& kind,
         py::array_t<int, py::array::c_style | py::array::forcecast> points,
         py::array_t<int, py::array::c_style | py::array::forcecast> labels) {
        if (points.ndim() != 2 || points.shape(1) != 4 || labels.size() != points.shape(0)) {
          throw Error(ErrorCode::InvalidArgument, "points must be (N, 4) [x1, y1, x2, y2] with N labels");
        }
        ModelPredictions mp{"model", {}};
        const DepthMap map = to_map(pred, std::nullopt, parse_kind(kind));
        std::vector<PointPair> pairs;
        for (py::ssize_t i = 0; i < points.shape(0); ++i) {
          PointPair p;
          p.pair_id = std::to_string(i);
          p.image_id = "image";
          p.p1 = {points.at(i, 0), points.at(i, 1)};
          p.p2 = {points.at(i, 2), points.at(i, 3)};
          p.validate_bounds(map.width, map.height);
          const int l = labels.at(i);
          if (l != 1 && l != 2) throw Error(ErrorCode::InvalidArgument, "labels must be 1 (first closer) or 2");
          p.label = l == 1 ? PairLabel::FirstCloser : PairLabel::SecondCloser;
          p.label_source = LabelSource::HumanConsensus;
          pairs.push_back(p);
        }
        mp.maps.emplace("image", map);
        return pair_accuracy(mp, pairs).mean();
      },
      py::arg("pred"), py::arg("kind"), py::arg("points"), py::arg("labels"),
      "Fraction of pairs whose closer point the prediction orders correctly.");
}
