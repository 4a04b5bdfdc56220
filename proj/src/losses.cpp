#include "depthkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "depthkit/alignment.hpp"
#include "depthkit/error.hpp"
#include "depthkit/toml_lite.hpp"

namespace depthkit {

void LossConfig::validate() const {
  if (!(ssi_weight >= 0.0) || !(gm_weight >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "loss weights must be non-negative");
  }
  if (gm_scales < 1) {
    throw Error(ErrorCode::ConfigError, "gm_scales must be at least 1");
  }
  if (!(trim_fraction >= 0.0 && trim_fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, "trim_fraction must lie in [0, 1)");
  }
  if (!(feat_align_margin >= -1.0 && feat_align_margin <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "feat_align_margin must lie in [-1, 1]");
  }
}

void LossConfig::update_from(const toml::Table& table) {
  if (auto v = table.number("ssi_weight")) ssi_weight = *v;
  if (auto v = table.number("gm_weight")) gm_weight = *v;
  if (auto v = table.integer("gm_scales")) gm_scales = static_cast<int>(*v);
  if (auto v = table.number("trim_fraction")) trim_fraction = *v;
  if (auto v = table.number("feat_align_margin")) feat_align_margin = *v;
  validate();
}

std::vector<double> normalize_median_mad(const DepthMap& map, const ValidMask& mask) {
  require_same_shape(map, mask);
  std::vector<double> samples;
  samples.reserve(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) samples.push_back(map.values[i]);
  }
  if (samples.size() < 2) {
    throw Error(ErrorCode::DegenerateFit,
                "normalization needs at least 2 valid pixels, got " + std::to_string(samples.size()));
  }
  const Location loc = median_and_mad(samples);
  if (!(loc.mad > 0.0)) {
    throw Error(ErrorCode::DegenerateFit, "map has zero deviation over valid pixels");
  }
  std::vector<double> out(mask.size(), 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out[i] = (double(map.values[i]) - loc.median) / loc.mad;
  }
  return out;
}

namespace {

std::vector<double> residual(const DepthMap& pred, const DepthMap& ref, const ValidMask& mask) {
  require_same_shape(pred, ref);
  std::vector<double> np = normalize_median_mad(pred, mask);
  const std::vector<double> nr = normalize_median_mad(ref, mask);
  for (std::size_t i = 0; i < np.size(); ++i) np[i] -= nr[i];
  return np;
}

void check_scales(int width, int height, int scales) {
  int w = width, h = height;
  for (int k = 1; k < scales; ++k) {
    w /= 2;
    h /= 2;
  }
  if (w < 2 || h < 2) {
    throw Error(ErrorCode::TooSmallForScales,
                std::to_string(width) + "x" + std::to_string(height) + " map cannot support " +
                    std::to_string(scales) + " gradient scales");
  }
}

struct Level {
  int width;
  int height;
  std::vector<double> r;
  std::vector<std::uint8_t> m;
};

double gradient_term(const Level& lv) {
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < lv.height; ++y) {
    for (int x = 0; x < lv.width; ++x) {
      const std::size_t i = std::size_t(y) * std::size_t(lv.width) + std::size_t(x);
      if (!lv.m[i]) continue;
      ++count;
      if (x + 1 < lv.width && lv.m[i + 1]) sum += std::abs(lv.r[i + 1] - lv.r[i]);
      if (y + 1 < lv.height && lv.m[i + std::size_t(lv.width)]) {
        sum += std::abs(lv.r[i + std::size_t(lv.width)] - lv.r[i]);
      }
    }
  }
  return count == 0 ? 0.0 : sum / double(count);
}

// 2x average pooling over valid fine pixels; a coarse pixel is valid when at
// least half of its 2x2 block is.
Level downsample(const Level& fine) {
  Level coarse{fine.width / 2, fine.height / 2, {}, {}};
  coarse.r.assign(std::size_t(coarse.width) * std::size_t(coarse.height), 0.0);
  coarse.m.assign(coarse.r.size(), 0);
  for (int y = 0; y < coarse.height; ++y) {
    for (int x = 0; x < coarse.width; ++x) {
      double sum = 0.0;
      int n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::size_t i =
              std::size_t(2 * y + dy) * std::size_t(fine.width) + std::size_t(2 * x + dx);
          if (fine.m[i]) {
            sum += fine.r[i];
            ++n;
          }
        }
      }
      if (n >= 2) {
        const std::size_t o = std::size_t(y) * std::size_t(coarse.width) + std::size_t(x);
        coarse.r[o] = sum / n;
        coarse.m[o] = 1;
      }
    }
  }
  return coarse;
}

} // namespace

SsiResult ssi_loss(const DepthMap& pred, const DepthMap& ref, const ValidMask& mask,
                   const LossConfig& cfg) {
  cfg.validate();
  const std::vector<double> r = residual(pred, ref, mask);
  SsiResult out;
  out.per_pixel = ScalarMap(pred.width, pred.height);
  std::vector<double> kept;
  kept.reserve(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!mask[i]) continue;
    out.per_pixel.values[i] = std::abs(r[i]);
    kept.push_back(out.per_pixel.values[i]);
  }
  const auto trimmed = static_cast<std::size_t>(std::floor(cfg.trim_fraction * double(kept.size())));
  if (trimmed > 0) {
    std::sort(kept.begin(), kept.end());
    kept.resize(kept.size() - trimmed);
  }
  out.loss = std::accumulate(kept.begin(), kept.end(), 0.0) / double(kept.size());
  return out;
}

GradientResult gradient_matching_loss(const DepthMap& pred, const DepthMap& ref,
                                      const ValidMask& mask, const LossConfig& cfg) {
  cfg.validate();
  require_same_shape(pred, ref);
  check_scales(pred.width, pred.height, cfg.gm_scales);
  Level level{pred.width, pred.height, residual(pred, ref, mask), {}};
  level.m.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) level.m[i] = mask[i] ? 1 : 0;

  GradientResult out;
  for (int k = 0; k < cfg.gm_scales; ++k) {
    if (k > 0) level = downsample(level);
    out.per_scale.push_back(gradient_term(level));
  }
  out.total = std::accumulate(out.per_scale.begin(), out.per_scale.end(), 0.0);
  return out;
}

LossReport combined_loss(const DepthMap& pred, const DepthMap& ref, const ValidMask& mask,
                         const LossConfig& cfg) {
  SsiResult ssi = ssi_loss(pred, ref, mask, cfg);
  GradientResult gm = gradient_matching_loss(pred, ref, mask, cfg);
  LossReport report;
  report.ssi = ssi.loss;
  report.gm_per_scale = std::move(gm.per_scale);
  report.gm = gm.total;
  report.total = cfg.ssi_weight * report.ssi + cfg.gm_weight * report.gm;
  report.per_pixel = std::move(ssi.per_pixel);
  return report;
}

double feature_alignment_loss(const FeatureMap& student, const FeatureMap& teacher, double margin) {
  if (student.height != teacher.height || student.width != teacher.width ||
      student.channels != teacher.channels) {
    throw Error(ErrorCode::InvalidArgument, "feature map shapes differ");
  }
  const std::size_t positions = std::size_t(student.height) * std::size_t(student.width);
  const std::size_t c = std::size_t(student.channels);
  if (positions == 0 || c == 0 || student.data.size() != positions * c ||
      teacher.data.size() != positions * c) {
    throw Error(ErrorCode::InvalidArgument, "feature map data does not match its shape");
  }
  double sum = 0.0;
  for (std::size_t p = 0; p < positions; ++p) {
    double dot = 0.0, ns = 0.0, nt = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double a = student.data[p * c + k];
      const double b = teacher.data[p * c + k];
      dot += a * b;
      ns += a * a;
      nt += b * b;
    }
    if (ns == 0.0 || nt == 0.0) {
      throw Error(ErrorCode::ZeroVector, "zero feature vector at position " + std::to_string(p));
    }
    const double cosine = dot / (std::sqrt(ns) * std::sqrt(nt));
    if (cosine < margin) sum += std::max(0.0, 1.0 - cosine);
  }
  return sum / double(positions);
}

} // namespace depthkit
