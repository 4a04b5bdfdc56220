#pragma once

#include <span>
#include <string_view>

#include "depthkit/depth_map.hpp"

namespace depthkit {

/// aligned = scale * pred + shift
struct AlignmentParams {
  double scale = 1.0;
  double shift = 0.0;

  friend bool operator==(const AlignmentParams&, const AlignmentParams&) = default;
};

enum class AlignmentMethod { LeastSquares, Robust };

std::string_view to_string(AlignmentMethod method);

/// Closed-form least-squares fit of `pred` onto `ref` over the pixels set in
/// `mask`; only those pixels are read. Sums are accumulated in double.
/// Throws DegenerateFit for < 2 pixels or constant `pred`.
AlignmentParams fit_scale_shift_lsq(const DepthMap& pred, const DepthMap& ref,
                                    const ValidMask& mask);

/// Median / mean-absolute-deviation matching:
///   scale = mad(ref) / mad(pred), shift = median(ref) - scale * median(pred).
AlignmentParams fit_scale_shift_robust(const DepthMap& pred, const DepthMap& ref,
                                       const ValidMask& mask);

AlignmentParams fit_scale_shift(const DepthMap& pred, const DepthMap& ref, const ValidMask& mask,
                                AlignmentMethod method);

/// Applies `params` at valid pixels; invalid pixels and the mask are untouched.
DepthMap align(const DepthMap& pred, const AlignmentParams& params);

// Span-level variants over already gathered samples.
AlignmentParams fit_lsq(std::span<const double> pred, std::span<const double> ref);
AlignmentParams fit_robust(std::span<const double> pred, std::span<const double> ref);

/// Median (mean of the two middle values for even counts) and mean absolute
/// deviation about it.
struct Location {
  double median = 0.0;
  double mad = 0.0;
};
Location median_and_mad(std::span<const double> values);

} // namespace depthkit
