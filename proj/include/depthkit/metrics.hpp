#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthkit/alignment.hpp"
#include "depthkit/depth_map.hpp"
#include "depthkit/manifest.hpp"

namespace depthkit {

namespace toml {
class Table;
}

enum class AlignSpace { InverseDepth, Depth };

std::string_view to_string(AlignSpace space);

struct EvalConfig {
  AlignmentMethod alignment = AlignmentMethod::LeastSquares;
  AlignSpace space = AlignSpace::InverseDepth;
  double delta_base = 1.25;
  std::optional<double> min_depth;
  std::optional<double> max_depth;
  /// Pool pixels across images instead of averaging per-image rows.
  bool pixel_pooled = false;

  void validate() const;
  /// Keys: `alignment` ("lsq"|"robust"), `space` ("inv"|"depth"),
  /// `delta_base`, `min_depth`, `max_depth`, `pixel_pooled`.
  void update_from(const toml::Table& table);
  std::string protocol_line() const;
};

struct MetricValues {
  double abs_rel = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double log10 = 0.0;
};

/// Raw sums behind MetricValues, kept so images can be pixel-pooled.
struct MetricSums {
  double abs_rel = 0.0;
  double squared = 0.0;
  double squared_log = 0.0;
  double log10 = 0.0;
  std::size_t within1 = 0;
  std::size_t within2 = 0;
  std::size_t within3 = 0;
  std::size_t count = 0;

  MetricSums& operator+=(const MetricSums& o);
  MetricValues finalize() const;
};

/// Scores already-aligned positive depths against positive reference depths.
MetricSums accumulate_depth_metrics(std::span<const double> pred_depth,
                                    std::span<const double> gt_depth, double delta_base = 1.25);
MetricValues compute_depth_metrics(std::span<const double> pred_depth,
                                   std::span<const double> gt_depth, double delta_base = 1.25);

struct ImageMetrics {
  std::string image_id;
  MetricValues values;
  MetricSums sums;
  AlignmentParams alignment;
  std::size_t valid_pixels = 0;
  /// Aligned values <= 0 replaced by a small positive floor before scoring.
  std::size_t clamped_pixels = 0;
};

/// Aligns `pred` to `gt` in `cfg.space`, converts to depth, and scores the
/// common valid pixels (after clamps). Throws DegenerateFit when the image
/// cannot be aligned.
ImageMetrics evaluate_image(const DepthMap& pred, const DepthMap& gt, const EvalConfig& cfg);

struct SkippedImage {
  std::string image_id;
  std::string reason;
};

struct MetricReport {
  std::string source_tag;
  EvalConfig protocol;
  MetricValues mean;
  std::size_t images_evaluated = 0;
  std::size_t images_skipped = 0;
  std::vector<ImageMetrics> per_image; // sorted by image_id
  std::vector<SkippedImage> skipped;
};

/// Combines rows in image_id order, so manifest order never changes a number.
MetricReport aggregate(std::vector<ImageMetrics> rows, std::vector<SkippedImage> skipped,
                       const EvalConfig& cfg);

MetricReport evaluate_dataset(const PredictionManifest& preds, const PredictionManifest& gts,
                              const EvalConfig& cfg, int threads = 1);

struct LabelComparison {
  MetricReport a;
  MetricReport b;
  MetricValues delta; // b - a
};

LabelComparison compare_label_sources(const PredictionManifest& preds_a,
                                      const PredictionManifest& preds_b,
                                      const PredictionManifest& gts, const EvalConfig& cfg,
                                      int threads = 1);

nlohmann::json to_json(const MetricValues& v);
nlohmann::json to_json(const MetricReport& report);
nlohmann::json to_json(const LabelComparison& cmp);
MetricReport report_from_json(const nlohmann::json& j);

/// Aligned-column text table, one row per report.
std::string format_metric_table(std::span<const MetricReport> reports);
std::string format_comparison_table(const LabelComparison& cmp);

} // namespace depthkit
