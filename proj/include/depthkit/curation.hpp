#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depthkit/depth_map.hpp"
#include "depthkit/manifest.hpp"

namespace depthkit {

enum class CurationLoss { SsiResidual, AbsDiff };

struct CurationConfig {
  /// Fraction of valid pixels with the largest loss to ignore.
  double n = 0.10;
  CurationLoss loss_kind = CurationLoss::SsiResidual;

  void validate() const;
};

struct CurationReport {
  std::string image_id;
  std::size_t pixels_total = 0;
  std::size_t pixels_valid_before = 0;
  std::size_t pixels_masked = 0;
  /// Smallest loss among masked pixels; empty when nothing was masked.
  std::optional<double> loss_threshold;
};

/// Invalidates exactly floor(n * valid) pixels: those with the largest loss.
/// Among equal losses the higher row-major index is masked first.
std::pair<ValidMask, CurationReport> mask_top_loss(const ScalarMap& loss, const ValidMask& mask,
                                                   const CurationConfig& cfg);

/// Per-pixel curation loss between a teacher map and its counterpart over
/// their common valid pixels.
ScalarMap curation_loss_map(const DepthMap& teacher, const DepthMap& counterpart,
                            CurationLoss kind);

struct CurationResult {
  PredictionManifest manifest;
  std::vector<CurationReport> reports;
};

/// Curates every teacher entry against its counterpart. Curated masks are
/// written to `out_dir/masks/`; the returned manifest points at them and at
/// the original teacher depth files. Reports follow teacher manifest order.
CurationResult curate_dataset(const PredictionManifest& teacher,
                              const PredictionManifest& counterpart, const CurationConfig& cfg,
                              const std::filesystem::path& out_dir, int threads = 1);

std::string report_to_jsonl(const std::vector<CurationReport>& reports);

} // namespace depthkit
