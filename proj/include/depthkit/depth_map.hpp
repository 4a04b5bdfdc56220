#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace depthkit {

/// Largest width or height accepted anywhere in the toolkit.
inline constexpr int kMaxSide = 16384;

enum class DepthKind : std::uint32_t { InverseRelative = 0, MetricMeters = 1 };

struct Pixel {
  int x = 0;
  int y = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
};

class ValidMask {
public:
  ValidMask() = default;
  ValidMask(int width, int height, bool initial = false);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
  bool at(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
  void set(std::size_t i, bool v) noexcept { bits_[i] = v ? 1 : 0; }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  std::size_t count() const noexcept;
  bool same_shape(const ValidMask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const ValidMask&, const ValidMask&) = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Pixelwise logical AND. Shapes must match.
ValidMask operator&(const ValidMask& a, const ValidMask& b);

/// Dense single-channel depth field. Inverse relative depth (disparity-like,
/// larger is closer) unless `kind` says metric. Invalid pixels hold 0.
struct DepthMap {
  int width = 0;
  int height = 0;
  DepthKind kind = DepthKind::InverseRelative;
  std::vector<float> values;
  ValidMask valid;

  DepthMap() = default;
  DepthMap(int w, int h, DepthKind k = DepthKind::InverseRelative);

  /// Builds a map whose mask marks NaN, infinities and exact zeros invalid
  /// (and non-positive values when `k` is metric); invalid values become 0.
  static DepthMap from_values(int w, int h, std::vector<float> vals,
                              DepthKind k = DepthKind::InverseRelative);

  std::size_t pixel_count() const noexcept { return values.size(); }
  std::size_t index(int x, int y) const noexcept { return valid.index(x, y); }
  float at(int x, int y) const noexcept { return values[index(x, y)]; }
  bool is_valid(int x, int y) const noexcept { return valid.at(x, y); }
  bool contains(Pixel p) const noexcept {
    return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height;
  }

  /// Throws InvalidArgument if the structural invariants are broken.
  void check_invariants() const;

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

/// Per-pixel double field (loss maps, residuals). Same indexing as DepthMap.
struct ScalarMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  ScalarMap() = default;
  ScalarMap(int w, int h) : width(w), height(h), values(std::size_t(w) * std::size_t(h), 0.0) {}
};

void require_same_shape(const DepthMap& a, const DepthMap& b);
void require_same_shape(const DepthMap& a, const ValidMask& m);

/// Pointwise conversion to inverse depth; metric values d become 1/d.
DepthMap to_inverse(const DepthMap& map);
/// Pointwise conversion to metric-like depth; inverse values v > 0 become 1/v,
/// non-positive inverse values are marked invalid.
DepthMap to_depth(const DepthMap& map);

} // namespace depthkit
