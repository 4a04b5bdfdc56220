#include "depthkit/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "depthkit/error.hpp"

namespace depthkit {

std::string_view to_string(AlignmentMethod method) {
  return method == AlignmentMethod::LeastSquares ? "lsq" : "robust";
}

namespace {

void gather(const DepthMap& pred, const DepthMap& ref, const ValidMask& mask,
            std::vector<double>& p, std::vector<double>& r) {
  require_same_shape(pred, ref);
  require_same_shape(pred, mask);
  p.reserve(mask.size());
  r.reserve(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    p.push_back(pred.values[i]);
    r.push_back(ref.values[i]);
  }
}

} // namespace

Location median_and_mad(std::span<const double> values) {
  if (values.empty()) {
    throw Error(ErrorCode::DegenerateFit, "median of an empty set");
  }
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t n = sorted.size();
  const std::size_t mid = n / 2;
  std::nth_element(sorted.begin(), sorted.begin() + mid, sorted.end());
  double median = sorted[mid];
  if (n % 2 == 0) {
    const double lower = *std::max_element(sorted.begin(), sorted.begin() + mid);
    median = 0.5 * (lower + median);
  }
  double dev = 0.0;
  for (double v : values) dev += std::abs(v - median);
  return {median, dev / double(n)};
}

AlignmentParams fit_lsq(std::span<const double> pred, std::span<const double> ref) {
  const std::size_t n = pred.size();
  if (n < 2) {
    throw Error(ErrorCode::DegenerateFit,
                "least-squares fit needs at least 2 valid pixels, got " + std::to_string(n));
  }
  if (std::all_of(pred.begin(), pred.end(), [&](double v) { return v == pred[0]; })) {
    throw Error(ErrorCode::DegenerateFit, "prediction is constant over valid pixels");
  }
  // Normal equations in centered form:
  //   [sum p^2  sum p][s]   [sum p r]
  //   [sum p    n    ][t] = [sum r  ]
  double mean_p = 0.0, mean_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_p += pred[i];
    mean_r += ref[i];
  }
  mean_p /= double(n);
  mean_r /= double(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = pred[i] - mean_p;
    sxx += dp * dp;
    sxy += dp * (ref[i] - mean_r);
  }
  if (!(sxx > 0.0)) {
    throw Error(ErrorCode::DegenerateFit, "prediction has zero variance over valid pixels");
  }
  const double s = sxy / sxx;
  return {s, mean_r - s * mean_p};
}

AlignmentParams fit_robust(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() < 2) {
    throw Error(ErrorCode::DegenerateFit,
                "robust fit needs at least 2 valid pixels, got " + std::to_string(pred.size()));
  }
  const Location lp = median_and_mad(pred);
  const Location lr = median_and_mad(ref);
  if (!(lp.mad > 0.0)) {
    throw Error(ErrorCode::DegenerateFit, "prediction has zero mean absolute deviation");
  }
  const double s = lr.mad / lp.mad;
  return {s, lr.median - s * lp.median};
}

AlignmentParams fit_scale_shift_lsq(const DepthMap& pred, const DepthMap& ref,
                                    const ValidMask& mask) {
  std::vector<double> p, r;
  gather(pred, ref, mask, p, r);
  return fit_lsq(p, r);
}

AlignmentParams fit_scale_shift_robust(const DepthMap& pred, const DepthMap& ref,
                                       const ValidMask& mask) {
  std::vector<double> p, r;
  gather(pred, ref, mask, p, r);
  return fit_robust(p, r);
}

AlignmentParams fit_scale_shift(const DepthMap& pred, const DepthMap& ref, const ValidMask& mask,
                                AlignmentMethod method) {
  return method == AlignmentMethod::LeastSquares ? fit_scale_shift_lsq(pred, ref, mask)
                                                 : fit_scale_shift_robust(pred, ref, mask);
}

DepthMap align(const DepthMap& pred, const AlignmentParams& params) {
  if (!std::isfinite(params.scale) || !std::isfinite(params.shift)) {
    throw Error(ErrorCode::InvalidArgument, "alignment parameters must be finite");
  }
  DepthMap out = pred;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.valid[i]) {
      out.values[i] = static_cast<float>(params.scale * double(pred.values[i]) + params.shift);
    }
  }
  return out;
}

} // namespace depthkit
