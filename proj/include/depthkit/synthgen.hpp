#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <variant>
#include <vector>

#include "depthkit/benchmark.hpp"
#include "depthkit/depth_map.hpp"

namespace depthkit::synth {

using Vec3 = std::array<double, 3>;
using Rgb = std::array<std::uint8_t, 3>;

/// Infinite plane through `point` with normal `normal`.
struct Plane {
  Vec3 point{0, 0, 5};
  Vec3 normal{0, 0, -1};
};

struct Sphere {
  Vec3 center{0, 0, 5};
  double radius = 1.0;
};

/// Box rotated by `yaw` radians about the vertical (y) axis.
struct Box {
  Vec3 center{0, 0, 5};
  Vec3 half_extents{0.5, 0.5, 0.5};
  double yaw = 0.0;
};

struct Primitive {
  std::variant<Plane, Sphere, Box> shape;
  Rgb color{180, 180, 180};
};

/// Pinhole camera. Camera axes: x right, y down, z forward; `pitch` (radians)
/// tilts the optical axis downward. Depth is the z coordinate in camera space.
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Vec3 position{0, 0, 0};
  double pitch = 0.0;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  Camera camera;
  int width = 64;
  int height = 48;
  std::uint64_t seed = 0;

  /// ConfigError for bad primitives or no primitives, DegenerateCamera for
  /// non-positive or non-finite intrinsics and out-of-range resolution.
  void validate() const;
};

/// Camera with a horizontal field of view of `hfov_deg` centred on the image.
Camera default_camera(int width, int height, double hfov_deg = 60.0);

/// TOML scene file: [scene] width/height/seed, [camera] fx/fy/cx/cy/position/
/// pitch_deg, and [[primitive]] tables with type = "plane" | "sphere" | "box".
SceneSpec load_scene(const std::filesystem::path& path);

/// Seeded indoor-style scene: floor, optional back wall, and 3-6 objects.
SceneSpec random_scene(std::uint64_t seed, int width, int height);

struct Render {
  DepthMap depth;                 // MetricMeters; rays that miss are invalid
  std::vector<int> primitive_id;  // -1 where the ray misses
  std::vector<std::uint8_t> rgb;  // flat-shaded, row-major RGB
};

/// Nearest analytic ray hit per pixel. Rays pass through pixel centres.
Render render(const SceneSpec& spec, int threads = 1);
DepthMap render_depth(const SceneSpec& spec, int threads = 1);

/// Up to `per_mask` keypoints per visible primitive, drawn from interior
/// pixels (all 4-neighbours share the id). Deterministic in `seed`.
std::vector<Keypoint> sample_keypoints(const Render& r, std::size_t per_mask, std::uint64_t seed);

enum class FakeKind { Identity, Affine, Monotone, Noisy, Inverted, Random };

/// Pointwise transform of a ground-truth map in inverse-depth space.
struct FakeModel {
  FakeKind kind = FakeKind::Identity;
  double a = 1.0, b = 0.0;  // Affine: a * v + b
  double gamma = 1.0;       // Monotone: v^gamma
  double sigma = 0.0;       // Noisy: v * exp(sigma * n)
  std::uint64_t seed = 0;   // Noisy, Random

  static FakeModel identity() { return {}; }
  static FakeModel affine(double a, double b) { return {FakeKind::Affine, a, b}; }
  static FakeModel monotone(double gamma) { return {FakeKind::Monotone, 1, 0, gamma}; }
  static FakeModel noisy(double sigma, std::uint64_t seed) {
    return {FakeKind::Noisy, 1, 0, 1, sigma, seed};
  }
  static FakeModel inverted() { return {FakeKind::Inverted}; }
  static FakeModel random(std::uint64_t seed) { return {FakeKind::Random, 1, 0, 1, 0, seed}; }

  /// "identity", "affine(2,3)", "monotone(2)", "noisy(0.05,7)", "inverted", "random(3)".
  static FakeModel parse(std::string_view spec);
  std::string name() const;
};

/// Identity returns `gt` unchanged. Every other kind returns an inverse
/// relative map with the validity mask of `gt`.
DepthMap fake_model(const DepthMap& gt, const FakeModel& model);

} // namespace depthkit::synth
