#include "depthkit/depth_map.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "depthkit/error.hpp"

namespace depthkit {

ValidMask::ValidMask(int width, int height, bool initial)
    : width_(width), height_(height),
      bits_(std::size_t(width) * std::size_t(height), initial ? 1 : 0) {
  if (width < 0 || height < 0) {
    throw Error(ErrorCode::InvalidArgument, "negative mask dimensions");
  }
}

std::size_t ValidMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

ValidMask operator&(const ValidMask& a, const ValidMask& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::InvalidArgument, "mask shapes differ");
  }
  ValidMask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.set(i, a[i] && b[i]);
  }
  return out;
}

DepthMap::DepthMap(int w, int h, DepthKind k)
    : width(w), height(h), kind(k), values(std::size_t(w) * std::size_t(h), 0.0f),
      valid(w, h) {}

DepthMap DepthMap::from_values(int w, int h, std::vector<float> vals, DepthKind k) {
  if (vals.size() != std::size_t(w) * std::size_t(h)) {
    throw Error(ErrorCode::InvalidArgument,
                "value count " + std::to_string(vals.size()) + " does not match " +
                    std::to_string(w) + "x" + std::to_string(h));
  }
  DepthMap m(w, h, k);
  m.values = std::move(vals);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const float v = m.values[i];
    bool ok = std::isfinite(v) && v != 0.0f;
    if (k == DepthKind::MetricMeters && v < 0.0f) {
      ok = false;
    }
    m.valid.set(i, ok);
    if (!ok) {
      m.values[i] = 0.0f;
    }
  }
  return m;
}

void DepthMap::check_invariants() const {
  if (width < 0 || height < 0 || values.size() != std::size_t(width) * std::size_t(height)) {
    throw Error(ErrorCode::InvalidArgument, "depth map size does not match its dimensions");
  }
  if (valid.width() != width || valid.height() != height) {
    throw Error(ErrorCode::InvalidArgument, "validity mask shape does not match depth map");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!valid[i]) continue;
    if (!std::isfinite(values[i]) || (kind == DepthKind::MetricMeters && values[i] <= 0.0f)) {
      throw Error(ErrorCode::InvalidArgument,
                  "invalid value at valid pixel " + std::to_string(i));
    }
  }
}

void require_same_shape(const DepthMap& a, const DepthMap& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::InvalidArgument,
                "shape mismatch: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                    " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

void require_same_shape(const DepthMap& a, const ValidMask& m) {
  if (a.width != m.width() || a.height != m.height()) {
    throw Error(ErrorCode::InvalidArgument, "mask shape does not match depth map");
  }
}

DepthMap to_inverse(const DepthMap& map) {
  if (map.kind == DepthKind::InverseRelative) {
    return map;
  }
  DepthMap out = map;
  out.kind = DepthKind::InverseRelative;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.valid[i]) {
      out.values[i] = 1.0f / map.values[i];
    }
  }
  return out;
}

DepthMap to_depth(const DepthMap& map) {
  if (map.kind == DepthKind::MetricMeters) {
    return map;
  }
  DepthMap out = map;
  out.kind = DepthKind::MetricMeters;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (!out.valid[i]) continue;
    if (map.values[i] > 0.0f) {
      out.values[i] = 1.0f / map.values[i];
    } else {
      out.values[i] = 0.0f;
      out.valid.set(i, false);
    }
  }
  return out;
}

} // namespace depthkit
