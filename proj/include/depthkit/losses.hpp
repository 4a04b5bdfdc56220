#pragma once

#include <vector>

#include "depthkit/depth_map.hpp"

namespace depthkit {

namespace toml {
class Table;
}

struct LossConfig {
  double ssi_weight = 1.0;
  double gm_weight = 2.0;
  int gm_scales = 4;
  double trim_fraction = 0.0;
  /// Cosine similarity above which a feature position contributes nothing.
  double feat_align_margin = 0.85;

  void validate() const;
  /// Reads `ssi_weight`, `gm_weight`, `gm_scales`, `trim_fraction` and
  /// `feat_align_margin`; absent keys keep their current value.
  void update_from(const toml::Table& table);
};

struct SsiResult {
  double loss = 0.0;
  ScalarMap per_pixel; // untrimmed |residual|, 0 at invalid pixels
};

struct GradientResult {
  double total = 0.0;
  std::vector<double> per_scale;
};

struct LossReport {
  double ssi = 0.0;
  std::vector<double> gm_per_scale;
  double gm = 0.0;
  double total = 0.0;
  ScalarMap per_pixel;
};

/// Median/MAD-normalized copy of `map` over `mask`; invalid pixels are 0.
/// Throws DegenerateFit when fewer than 2 pixels or the deviation is zero.
std::vector<double> normalize_median_mad(const DepthMap& map, const ValidMask& mask);

SsiResult ssi_loss(const DepthMap& pred, const DepthMap& ref, const ValidMask& mask,
                   const LossConfig& cfg = {});

GradientResult gradient_matching_loss(const DepthMap& pred, const DepthMap& ref,
                                      const ValidMask& mask, const LossConfig& cfg = {});

LossReport combined_loss(const DepthMap& pred, const DepthMap& ref, const ValidMask& mask,
                         const LossConfig& cfg = {});

/// Dense H x W x C feature tensor, channel-last.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;
};

/// Mean over positions of (1 - cos) where cos < margin, 0 elsewhere.
double feature_alignment_loss(const FeatureMap& student, const FeatureMap& teacher,
                              double margin = 0.85);

} // namespace depthkit
