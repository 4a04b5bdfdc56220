#include "depthkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "depthkit/error.hpp"
#include "depthkit/parallel.hpp"
#include "depthkit/toml_lite.hpp"

namespace depthkit {

using nlohmann::json;

std::string_view to_string(AlignSpace space) {
  return space == AlignSpace::InverseDepth ? "inv" : "depth";
}

void EvalConfig::validate() const {
  if (!(delta_base > 1.0) || !std::isfinite(delta_base)) {
    throw Error(ErrorCode::ConfigError, "delta_base must be > 1");
  }
  if (min_depth && max_depth && !(*min_depth < *max_depth)) {
    throw Error(ErrorCode::ConfigError, "min_depth must be below max_depth");
  }
}

void EvalConfig::update_from(const toml::Table& table) {
  if (auto v = table.string("alignment")) {
    if (*v == "lsq") {
      alignment = AlignmentMethod::LeastSquares;
    } else if (*v == "robust") {
      alignment = AlignmentMethod::Robust;
    } else {
      throw Error(ErrorCode::ConfigError, "alignment must be 'lsq' or 'robust'");
    }
  }
  if (auto v = table.string("space")) {
    if (*v == "inv") {
      space = AlignSpace::InverseDepth;
    } else if (*v == "depth") {
      space = AlignSpace::Depth;
    } else {
      throw Error(ErrorCode::ConfigError, "space must be 'inv' or 'depth'");
    }
  }
  if (auto v = table.number("delta_base")) delta_base = *v;
  if (auto v = table.number("min_depth")) min_depth = *v;
  if (auto v = table.number("max_depth")) max_depth = *v;
  if (auto v = table.boolean("pixel_pooled")) pixel_pooled = *v;
  validate();
}

std::string EvalConfig::protocol_line() const {
  std::ostringstream out;
  out << "protocol: alignment=" << to_string(alignment)
      << " space=" << (space == AlignSpace::InverseDepth ? "inverse-depth" : "depth")
      << " delta_base=" << delta_base
      << " averaging=" << (pixel_pooled ? "pixel-pooled" : "per-image") << " clamps=";
  if (!min_depth && !max_depth) {
    out << "off";
  } else {
    out << "[" << (min_depth ? std::to_string(*min_depth) : "-") << ", "
        << (max_depth ? std::to_string(*max_depth) : "-") << "]";
  }
  return out.str();
}

MetricSums& MetricSums::operator+=(const MetricSums& o) {
  abs_rel += o.abs_rel;
  squared += o.squared;
  squared_log += o.squared_log;
  log10 += o.log10;
  within1 += o.within1;
  within2 += o.within2;
  within3 += o.within3;
  count += o.count;
  return *this;
}

MetricValues MetricSums::finalize() const {
  MetricValues v;
  if (count == 0) return v;
  const double n = double(count);
  v.abs_rel = abs_rel / n;
  v.delta1 = double(within1) / n;
  v.delta2 = double(within2) / n;
  v.delta3 = double(within3) / n;
  v.rmse = std::sqrt(squared / n);
  v.rmse_log = std::sqrt(squared_log / n);
  v.log10 = log10 / n;
  return v;
}

MetricSums accumulate_depth_metrics(std::span<const double> pred_depth,
                                    std::span<const double> gt_depth, double delta_base) {
  if (pred_depth.size() != gt_depth.size()) {
    throw Error(ErrorCode::InvalidArgument, "metric inputs differ in length");
  }
  const double t1 = delta_base;
  const double t2 = delta_base * delta_base;
  const double t3 = delta_base * delta_base * delta_base;
  MetricSums s;
  for (std::size_t i = 0; i < pred_depth.size(); ++i) {
    const double p = pred_depth[i];
    const double g = gt_depth[i];
    const double diff = p - g;
    s.abs_rel += std::abs(diff) / g;
    s.squared += diff * diff;
    const double dl = std::log(p) - std::log(g);
    s.squared_log += dl * dl;
    s.log10 += std::abs(std::log10(p) - std::log10(g));
    const double ratio = std::max(p / g, g / p);
    if (ratio < t1) ++s.within1;
    if (ratio < t2) ++s.within2;
    if (ratio < t3) ++s.within3;
    ++s.count;
  }
  return s;
}

MetricValues compute_depth_metrics(std::span<const double> pred_depth,
                                   std::span<const double> gt_depth, double delta_base) {
  return accumulate_depth_metrics(pred_depth, gt_depth, delta_base).finalize();
}

ImageMetrics evaluate_image(const DepthMap& pred, const DepthMap& gt, const EvalConfig& cfg) {
  cfg.validate();
  require_same_shape(pred, gt);
  const bool inverse_space = cfg.space == AlignSpace::InverseDepth;

  std::vector<double> source, target, gt_depth;
  source.reserve(pred.values.size());
  target.reserve(pred.values.size());
  gt_depth.reserve(pred.values.size());
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    if (!pred.valid[i] || !gt.valid[i]) continue;
    const double g_raw = gt.values[i];
    if (!(g_raw > 0.0)) continue;
    const double d = gt.kind == DepthKind::MetricMeters ? g_raw : 1.0 / g_raw;
    if (cfg.min_depth && d < *cfg.min_depth) continue;
    if (cfg.max_depth && d > *cfg.max_depth) continue;

    double p = pred.values[i];
    const bool pred_inverse = pred.kind == DepthKind::InverseRelative;
    if (pred_inverse != inverse_space) {
      if (!(p > 0.0)) continue;
      p = 1.0 / p;
    }
    source.push_back(p);
    target.push_back(inverse_space ? 1.0 / d : d);
    gt_depth.push_back(d);
  }

  ImageMetrics row;
  row.alignment = cfg.alignment == AlignmentMethod::LeastSquares ? fit_lsq(source, target)
                                                                 : fit_robust(source, target);
  row.valid_pixels = source.size();

  const double floor_value = *std::min_element(target.begin(), target.end()) * 1e-3;
  std::vector<double> pred_depth(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    double a = row.alignment.scale * source[i] + row.alignment.shift;
    if (!(a > 0.0) || !std::isfinite(a)) {
      a = floor_value;
      ++row.clamped_pixels;
    }
    pred_depth[i] = inverse_space ? 1.0 / a : a;
  }
  row.sums = accumulate_depth_metrics(pred_depth, gt_depth, cfg.delta_base);
  row.values = row.sums.finalize();
  return row;
}

MetricReport aggregate(std::vector<ImageMetrics> rows, std::vector<SkippedImage> skipped,
                       const EvalConfig& cfg) {
  std::sort(rows.begin(), rows.end(),
            [](const ImageMetrics& a, const ImageMetrics& b) { return a.image_id < b.image_id; });
  std::sort(skipped.begin(), skipped.end(),
            [](const SkippedImage& a, const SkippedImage& b) { return a.image_id < b.image_id; });
  MetricReport report;
  report.protocol = cfg;
  report.images_evaluated = rows.size();
  report.images_skipped = skipped.size();
  if (!rows.empty()) {
    if (cfg.pixel_pooled) {
      MetricSums pooled;
      for (const auto& r : rows) pooled += r.sums;
      report.mean = pooled.finalize();
    } else {
      MetricValues m;
      for (const auto& r : rows) {
        m.abs_rel += r.values.abs_rel;
        m.delta1 += r.values.delta1;
        m.delta2 += r.values.delta2;
        m.delta3 += r.values.delta3;
        m.rmse += r.values.rmse;
        m.rmse_log += r.values.rmse_log;
        m.log10 += r.values.log10;
      }
      const double n = double(rows.size());
      m.abs_rel /= n;
      m.delta1 /= n;
      m.delta2 /= n;
      m.delta3 /= n;
      m.rmse /= n;
      m.rmse_log /= n;
      m.log10 /= n;
      report.mean = m;
    }
  }
  report.per_image = std::move(rows);
  report.skipped = std::move(skipped);
  return report;
}

MetricReport evaluate_dataset(const PredictionManifest& preds, const PredictionManifest& gts,
                              const EvalConfig& cfg, int threads) {
  cfg.validate();
  const std::vector<std::string> ids = require_same_ids(gts, preds);
  std::vector<std::optional<ImageMetrics>> rows(ids.size());
  std::vector<std::optional<SkippedImage>> skips(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const ManifestEntry& g = *gts.find(ids[i]);
    const ManifestEntry& p = *preds.find(ids[i]);
    const DepthMap gt = load_entry_depth(gts, g);
    const DepthMap pred = load_entry_depth(preds, p);
    try {
      ImageMetrics row = evaluate_image(pred, gt, cfg);
      row.image_id = ids[i];
      rows[i] = std::move(row);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateFit) throw;
      skips[i] = SkippedImage{ids[i], e.what()};
    }
  });
  std::vector<ImageMetrics> kept;
  std::vector<SkippedImage> skipped;
  for (auto& r : rows) {
    if (r) kept.push_back(std::move(*r));
  }
  for (auto& s : skips) {
    if (s) skipped.push_back(std::move(*s));
  }
  MetricReport report = aggregate(std::move(kept), std::move(skipped), cfg);
  report.source_tag = preds.source_tag;
  return report;
}

namespace {

MetricValues difference(const MetricValues& b, const MetricValues& a) {
  return {b.abs_rel - a.abs_rel, b.delta1 - a.delta1, b.delta2 - a.delta2, b.delta3 - a.delta3,
          b.rmse - a.rmse,       b.rmse_log - a.rmse_log, b.log10 - a.log10};
}

} // namespace

LabelComparison compare_label_sources(const PredictionManifest& preds_a,
                                      const PredictionManifest& preds_b,
                                      const PredictionManifest& gts, const EvalConfig& cfg,
                                      int threads) {
  require_same_ids(gts, preds_a);
  require_same_ids(gts, preds_b);
  if (gts.entries.empty()) {
    throw Error(ErrorCode::MissingCounterpart, "label sources share no images");
  }
  LabelComparison cmp;
  cmp.a = evaluate_dataset(preds_a, gts, cfg, threads);
  cmp.b = evaluate_dataset(preds_b, gts, cfg, threads);
  cmp.delta = difference(cmp.b.mean, cmp.a.mean);
  return cmp;
}

// ---------------------------------------------------------------- output

json to_json(const MetricValues& v) {
  return json{{"abs_rel", v.abs_rel}, {"delta1", v.delta1},     {"delta2", v.delta2},
              {"delta3", v.delta3},   {"rmse", v.rmse},         {"rmse_log", v.rmse_log},
              {"log10", v.log10}};
}

namespace {

MetricValues values_from_json(const json& j) {
  MetricValues v;
  v.abs_rel = j.at("abs_rel").get<double>();
  v.delta1 = j.at("delta1").get<double>();
  v.delta2 = j.at("delta2").get<double>();
  v.delta3 = j.at("delta3").get<double>();
  v.rmse = j.at("rmse").get<double>();
  v.rmse_log = j.at("rmse_log").get<double>();
  v.log10 = j.at("log10").get<double>();
  return v;
}

json protocol_json(const EvalConfig& c) {
  json j{{"alignment", to_string(c.alignment)},
         {"space", to_string(c.space)},
         {"delta_base", c.delta_base},
         {"pixel_pooled", c.pixel_pooled}};
  j["min_depth"] = c.min_depth ? json(*c.min_depth) : json();
  j["max_depth"] = c.max_depth ? json(*c.max_depth) : json();
  return j;
}

} // namespace

json to_json(const MetricReport& r) {
  json j;
  j["source"] = r.source_tag;
  j["protocol"] = protocol_json(r.protocol);
  j["reference_anchor"] =
      "published ViT-L relative-depth model on KITTI: AbsRel 0.074, delta1 0.946 "
      "(documentation only, not reproduced here)";
  j["mean"] = to_json(r.mean);
  j["images_evaluated"] = r.images_evaluated;
  j["images_skipped"] = r.images_skipped;
  json rows = json::array();
  for (const auto& row : r.per_image) {
    json jr = to_json(row.values);
    jr["image_id"] = row.image_id;
    jr["valid_pixels"] = row.valid_pixels;
    jr["clamped_pixels"] = row.clamped_pixels;
    jr["scale"] = row.alignment.scale;
    jr["shift"] = row.alignment.shift;
    rows.push_back(std::move(jr));
  }
  j["per_image"] = std::move(rows);
  json skipped = json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"image_id", s.image_id}, {"reason", s.reason}});
  j["skipped"] = std::move(skipped);
  return j;
}

json to_json(const LabelComparison& cmp) {
  return json{{"a", to_json(cmp.a)}, {"b", to_json(cmp.b)}, {"delta_b_minus_a", to_json(cmp.delta)}};
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  r.source_tag = j.value("source", "");
  const json& p = j.at("protocol");
  r.protocol.alignment = p.at("alignment").get<std::string>() == "robust" ? AlignmentMethod::Robust
                                                                          : AlignmentMethod::LeastSquares;
  r.protocol.space = p.at("space").get<std::string>() == "depth" ? AlignSpace::Depth
                                                                 : AlignSpace::InverseDepth;
  r.protocol.delta_base = p.at("delta_base").get<double>();
  r.protocol.pixel_pooled = p.value("pixel_pooled", false);
  if (p.contains("min_depth") && !p["min_depth"].is_null()) r.protocol.min_depth = p["min_depth"].get<double>();
  if (p.contains("max_depth") && !p["max_depth"].is_null()) r.protocol.max_depth = p["max_depth"].get<double>();
  r.mean = values_from_json(j.at("mean"));
  r.images_evaluated = j.at("images_evaluated").get<std::size_t>();
  r.images_skipped = j.at("images_skipped").get<std::size_t>();
  for (const auto& jr : j.value("per_image", json::array())) {
    ImageMetrics row;
    row.image_id = jr.at("image_id").get<std::string>();
    row.values = values_from_json(jr);
    row.valid_pixels = jr.value("valid_pixels", std::size_t{0});
    row.clamped_pixels = jr.value("clamped_pixels", std::size_t{0});
    row.alignment = {jr.value("scale", 1.0), jr.value("shift", 0.0)};
    r.per_image.push_back(std::move(row));
  }
  for (const auto& js : j.value("skipped", json::array())) {
    r.skipped.push_back({js.at("image_id").get<std::string>(), js.value("reason", "")});
  }
  return r;
}

namespace {

std::string cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

void append_row(std::ostringstream& out, const std::vector<std::string>& cells,
                const std::vector<std::size_t>& widths) {
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (c) out << "  ";
    out << pad(cells[c], widths[c], c == 0);
  }
  out << '\n';
}

std::string render(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows, const std::string& preamble) {
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) widths[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], r[c].size());
  }
  std::ostringstream out;
  out << preamble;
  append_row(out, header, widths);
  std::size_t total = 0;
  for (auto w : widths) total += w;
  out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
  for (const auto& r : rows) append_row(out, r, widths);
  return out.str();
}

std::vector<std::string> metric_cells(const std::string& name, const MetricValues& v) {
  return {name,         cell(v.abs_rel), cell(v.delta1),   cell(v.delta2),
          cell(v.delta3), cell(v.rmse),  cell(v.rmse_log), cell(v.log10)};
}

const std::vector<std::string> kMetricHeader = {"source",  "AbsRel(lower)", "d1(higher)",
                                                "d2",      "d3",            "RMSE",
                                                "RMSElog", "log10"};

} // namespace

std::string format_metric_table(std::span<const MetricReport> reports) {
  std::vector<std::string> header = kMetricHeader;
  header.push_back("images");
  header.push_back("skipped");
  std::vector<std::vector<std::string>> rows;
  std::string preamble;
  for (const auto& r : reports) {
    auto cells = metric_cells(r.source_tag.empty() ? "-" : r.source_tag, r.mean);
    cells.push_back(std::to_string(r.images_evaluated));
    cells.push_back(std::to_string(r.images_skipped));
    rows.push_back(std::move(cells));
  }
  if (!reports.empty()) preamble = reports.front().protocol.protocol_line() + "\n";
  preamble += "reference anchor (documentation only): ViT-L on KITTI, AbsRel 0.074, d1 0.946\n";
  return render(header, rows, preamble);
}

std::string format_comparison_table(const LabelComparison& cmp) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back(metric_cells(cmp.a.source_tag.empty() ? "a" : cmp.a.source_tag, cmp.a.mean));
  rows.push_back(metric_cells(cmp.b.source_tag.empty() ? "b" : cmp.b.source_tag, cmp.b.mean));
  auto delta = metric_cells("delta (b-a)", cmp.delta);
  for (std::size_t c = 1; c < delta.size(); ++c) {
    if (delta[c][0] != '-') delta[c] = "+" + delta[c];
  }
  rows.push_back(std::move(delta));
  return render(kMetricHeader, rows, cmp.a.protocol.protocol_line() + "\n");
}

} // namespace depthkit
