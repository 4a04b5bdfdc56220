#include "depthkit/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>

#include "depthkit/error.hpp"
#include "depthkit/parallel.hpp"
#include "depthkit/random.hpp"
#include "depthkit/toml_lite.hpp"

namespace depthkit::synth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = 1e-9;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
bool finite(const Vec3& a) {
  return std::isfinite(a[0]) && std::isfinite(a[1]) && std::isfinite(a[2]);
}

struct Hit {
  double t = kInf;
  Vec3 normal{0, 0, 0};
};

Hit intersect(const Plane& p, const Vec3& o, const Vec3& d) {
  const double denom = dot(p.normal, d);
  if (std::abs(denom) < kEps) return {};
  const double t = dot(p.normal, sub(p.point, o)) / denom;
  if (t <= kEps) return {};
  return {t, p.normal};
}

Hit intersect(const Sphere& s, const Vec3& o, const Vec3& d) {
  const Vec3 oc = sub(o, s.center);
  const double a = dot(d, d);
  const double half_b = dot(oc, d);
  const double c = dot(oc, oc) - s.radius * s.radius;
  const double disc = half_b * half_b - a * c;
  if (disc < 0) return {};
  const double sq = std::sqrt(disc);
  double t = (-half_b - sq) / a;
  if (t <= kEps) t = (-half_b + sq) / a;
  if (t <= kEps) return {};
  const Vec3 at{o[0] + t * d[0] - s.center[0], o[1] + t * d[1] - s.center[1],
                o[2] + t * d[2] - s.center[2]};
  return {t, at};
}

Hit intersect(const Box& b, const Vec3& o, const Vec3& d) {
  // into box-local frame: undo the yaw about y
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  auto to_local = [&](const Vec3& v) { return Vec3{c * v[0] - s * v[2], v[1], s * v[0] + c * v[2]}; };
  const Vec3 lo = to_local(sub(o, b.center));
  const Vec3 ld = to_local(d);
  double t_near = -kInf, t_far = kInf;
  int axis_near = 0;
  double sign_near = 1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(ld[i]) < kEps) {
      if (std::abs(lo[i]) > b.half_extents[i]) return {};
      continue;
    }
    double t1 = (-b.half_extents[i] - lo[i]) / ld[i];
    double t2 = (b.half_extents[i] - lo[i]) / ld[i];
    double sgn = -1;
    if (t1 > t2) {
      std::swap(t1, t2);
      sgn = 1;
    }
    if (t1 > t_near) {
      t_near = t1;
      axis_near = i;
      sign_near = sgn;
    }
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_far <= kEps) return {};
  if (t_near <= kEps) return {}; // camera inside the box
  Vec3 ln{0, 0, 0};
  ln[axis_near] = sign_near;
  // back to world: apply the yaw
  const Vec3 wn{c * ln[0] + s * ln[2], ln[1], -s * ln[0] + c * ln[2]};
  return {t_near, wn};
}

Vec3 read_vec3(const toml::Table& t, std::string_view key, Vec3 fallback) {
  auto v = t.numbers(key);
  if (!v) return fallback;
  if (v->size() != 3) {
    throw Error(ErrorCode::ConfigError, "'" + std::string(key) + "' must have three numbers");
  }
  return {(*v)[0], (*v)[1], (*v)[2]};
}

Rgb read_color(const toml::Table& t, Rgb fallback) {
  auto v = t.numbers("color");
  if (!v) return fallback;
  if (v->size() != 3) throw Error(ErrorCode::ConfigError, "'color' must have three numbers");
  Rgb out{};
  for (int i = 0; i < 3; ++i) out[i] = std::uint8_t(std::clamp((*v)[i], 0.0, 255.0));
  return out;
}

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

} // namespace

void SceneSpec::validate() const {
  if (width <= 0 || height <= 0 || width > kMaxSide || height > kMaxSide) {
    throw Error(ErrorCode::DegenerateCamera,
                "resolution " + std::to_string(width) + "x" + std::to_string(height) + " is out of range");
  }
  const Camera& c = camera;
  if (!(c.fx > 0) || !(c.fy > 0) || !std::isfinite(c.fx) || !std::isfinite(c.fy) ||
      !std::isfinite(c.cx) || !std::isfinite(c.cy) || !finite(c.position) ||
      !std::isfinite(c.pitch) || std::abs(c.pitch) >= std::numbers::pi / 2) {
    throw Error(ErrorCode::DegenerateCamera, "camera intrinsics must be finite with fx, fy > 0");
  }
  if (primitives.empty()) throw Error(ErrorCode::ConfigError, "scene has no primitives");
  for (const auto& p : primitives) {
    std::visit(
        [](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Plane>) {
            if (!finite(s.point) || !finite(s.normal) || norm(s.normal) < kEps) {
              throw Error(ErrorCode::ConfigError, "plane needs a finite point and non-zero normal");
            }
          } else if constexpr (std::is_same_v<T, Sphere>) {
            if (!finite(s.center) || !(s.radius > 0) || !std::isfinite(s.radius)) {
              throw Error(ErrorCode::ConfigError, "sphere needs a finite center and radius > 0");
            }
          } else {
            if (!finite(s.center) || !finite(s.half_extents) || !std::isfinite(s.yaw) ||
                !(s.half_extents[0] > 0 && s.half_extents[1] > 0 && s.half_extents[2] > 0)) {
              throw Error(ErrorCode::ConfigError, "box needs finite pose and positive half extents");
            }
          }
        },
        p.shape);
  }
}

Camera default_camera(int width, int height, double hfov_deg) {
  Camera c;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * deg(hfov_deg));
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  return c;
}

SceneSpec load_scene(const std::filesystem::path& path) {
  const toml::Table root = toml::parse_file(path);
  SceneSpec spec;
  if (const toml::Table* s = root.table("scene")) {
    spec.width = int(s->integer("width").value_or(spec.width));
    spec.height = int(s->integer("height").value_or(spec.height));
    spec.seed = std::uint64_t(s->integer("seed").value_or(0));
  }
  spec.camera = default_camera(spec.width, spec.height, 60.0);
  if (const toml::Table* c = root.table("camera")) {
    if (auto h = c->number("hfov_deg")) spec.camera = default_camera(spec.width, spec.height, *h);
    spec.camera.fx = c->number("fx").value_or(spec.camera.fx);
    spec.camera.fy = c->number("fy").value_or(spec.camera.fy);
    spec.camera.cx = c->number("cx").value_or(spec.camera.cx);
    spec.camera.cy = c->number("cy").value_or(spec.camera.cy);
    spec.camera.position = read_vec3(*c, "position", spec.camera.position);
    spec.camera.pitch = deg(c->number("pitch_deg").value_or(0.0));
  }
  for (const toml::Table* t : root.tables("primitive")) {
    const std::string type = t->string("type").value_or("");
    Primitive p;
    p.color = read_color(*t, p.color);
    if (type == "plane") {
      Plane pl;
      pl.point = read_vec3(*t, "point", pl.point);
      pl.normal = read_vec3(*t, "normal", pl.normal);
      p.shape = pl;
    } else if (type == "sphere") {
      Sphere s;
      s.center = read_vec3(*t, "center", s.center);
      s.radius = t->number("radius").value_or(s.radius);
      p.shape = s;
    } else if (type == "box") {
      Box b;
      b.center = read_vec3(*t, "center", b.center);
      b.half_extents = read_vec3(*t, "half_extents", b.half_extents);
      b.yaw = deg(t->number("yaw_deg").value_or(0.0));
      p.shape = b;
    } else {
      throw Error(ErrorCode::ConfigError, path.string() + ": unknown primitive type '" + type + "'");
    }
    spec.primitives.push_back(p);
  }
  spec.validate();
  return spec;
}

SceneSpec random_scene(std::uint64_t seed, int width, int height) {
  auto rng = seeded_rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  auto color = [&] {
    return Rgb{std::uint8_t(60 + uniform_below(rng, 180)), std::uint8_t(60 + uniform_below(rng, 180)),
               std::uint8_t(60 + uniform_below(rng, 180))};
  };
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.seed = seed;
  spec.camera = default_camera(width, height, uni(50.0, 70.0));
  spec.camera.pitch = deg(uni(0.0, 12.0));
  spec.primitives.push_back({Plane{{0, uni(1.2, 1.8), 0}, {0, -1, 0}}, color()});
  if (uniform01(rng) < 0.75) {
    spec.primitives.push_back({Plane{{0, 0, uni(12.0, 20.0)}, {0, 0, -1}}, color()});
  }
  const std::size_t objects = 3 + std::size_t(uniform_below(rng, 4));
  for (std::size_t i = 0; i < objects; ++i) {
    const double z = uni(3.0, 10.0);
    const double x = uni(-0.45, 0.45) * z;
    if (uniform01(rng) < 0.5) {
      const double r = uni(0.3, 1.0);
      spec.primitives.push_back({Sphere{{x, uni(-0.5, 1.0), z}, r}, color()});
    } else {
      const Vec3 half{uni(0.25, 0.9), uni(0.25, 0.9), uni(0.25, 0.9)};
      spec.primitives.push_back({Box{{x, uni(-0.5, 1.0), z}, half, uni(-0.8, 0.8)}, color()});
    }
  }
  spec.validate();
  return spec;
}

Render render(const SceneSpec& spec, int threads) {
  spec.validate();
  const Camera& cam = spec.camera;
  const double cp = std::cos(cam.pitch), sp = std::sin(cam.pitch);
  const Vec3 light = [] {
    Vec3 l{-0.4, -0.8, -0.45};
    const double n = norm(l);
    return Vec3{l[0] / n, l[1] / n, l[2] / n};
  }();

  Render out;
  const std::size_t n = std::size_t(spec.width) * std::size_t(spec.height);
  std::vector<float> depth(n, 0.0f);
  out.primitive_id.assign(n, -1);
  out.rgb.assign(n * 3, 0);
  parallel_for(std::size_t(spec.height), threads, [&](std::size_t row) {
    const int y = int(row);
    for (int x = 0; x < spec.width; ++x) {
      // camera-space direction with unit z so that t is the z-depth
      const double dx = (x + 0.5 - cam.cx) / cam.fx;
      const double dy = (y + 0.5 - cam.cy) / cam.fy;
      const Vec3 d{dx, cp * dy + sp, -sp * dy + cp};
      Hit best;
      int id = -1;
      for (std::size_t k = 0; k < spec.primitives.size(); ++k) {
        Hit h = std::visit([&](const auto& s) { return intersect(s, cam.position, d); },
                           spec.primitives[k].shape);
        if (h.t < best.t) {
          best = h;
          id = int(k);
        }
      }
      const std::size_t i = std::size_t(y) * std::size_t(spec.width) + std::size_t(x);
      const std::size_t sky_rgb = i * 3;
      if (id < 0) {
        out.rgb[sky_rgb] = 150;
        out.rgb[sky_rgb + 1] = 190;
        out.rgb[sky_rgb + 2] = 235;
        continue;
      }
      depth[i] = float(best.t);
      out.primitive_id[i] = id;
      const double nn = norm(best.normal);
      const double shade = 0.35 + 0.65 * std::abs(dot(best.normal, light)) / nn;
      const Rgb& c = spec.primitives[std::size_t(id)].color;
      for (int ch = 0; ch < 3; ++ch) out.rgb[sky_rgb + ch] = std::uint8_t(std::lround(c[ch] * shade));
    }
  });
  out.depth = DepthMap::from_values(spec.width, spec.height, std::move(depth), DepthKind::MetricMeters);
  return out;
}

DepthMap render_depth(const SceneSpec& spec, int threads) { return render(spec, threads).depth; }

std::vector<Keypoint> sample_keypoints(const Render& r, std::size_t per_mask, std::uint64_t seed) {
  const int w = r.depth.width, h = r.depth.height;
  std::map<int, std::vector<Pixel>> interior;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const std::size_t i = std::size_t(y) * std::size_t(w) + std::size_t(x);
      const int id = r.primitive_id[i];
      if (id < 0) continue;
      if (r.primitive_id[i - 1] == id && r.primitive_id[i + 1] == id &&
          r.primitive_id[i - std::size_t(w)] == id && r.primitive_id[i + std::size_t(w)] == id) {
        interior[id].push_back({x, y});
      }
    }
  }
  auto rng = seeded_rng(seed);
  std::vector<Keypoint> out;
  for (auto& [id, pixels] : interior) {
    const std::size_t take = std::min(per_mask, pixels.size());
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t pick = k + std::size_t(uniform_below(rng, pixels.size() - k));
      std::swap(pixels[k], pixels[pick]);
      out.push_back({pixels[k], id});
    }
  }
  return out;
}

namespace {

double parse_number(std::string_view s, std::string_view spec) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  try {
    std::size_t used = 0;
    const std::string str(s);
    const double v = std::stod(str, &used);
    if (used != str.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "bad number in fake model '" + std::string(spec) + "'");
  }
}

std::vector<double> parse_args(std::string_view spec, std::string_view& head) {
  const auto open = spec.find('(');
  head = spec.substr(0, open);
  std::vector<double> args;
  if (open == std::string_view::npos) return args;
  if (spec.back() != ')') {
    throw Error(ErrorCode::ConfigError, "unbalanced fake model '" + std::string(spec) + "'");
  }
  std::string_view inner = spec.substr(open + 1, spec.size() - open - 2);
  while (!inner.empty()) {
    const auto comma = inner.find(',');
    args.push_back(parse_number(inner.substr(0, comma), spec));
    if (comma == std::string_view::npos) break;
    inner.remove_prefix(comma + 1);
  }
  return args;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// Per-pixel counter-based stream so results do not depend on thread layout.
std::mt19937_64 pixel_rng(std::uint64_t seed, std::size_t i) {
  return seeded_rng(splitmix64(seed) ^ (0x632be59bd9b4e019ull * (std::uint64_t(i) + 1)));
}

} // namespace

FakeModel FakeModel::parse(std::string_view spec) {
  std::string_view head;
  const std::vector<double> args = parse_args(spec, head);
  auto need = [&](std::size_t n) {
    if (args.size() != n) {
      throw Error(ErrorCode::ConfigError, "fake model '" + std::string(spec) + "' expects " +
                                              std::to_string(n) + " argument(s)");
    }
  };
  if (head == "identity") { need(0); return identity(); }
  if (head == "inverted") { need(0); return inverted(); }
  if (head == "affine") { need(2); return affine(args[0], args[1]); }
  if (head == "monotone") { need(1); return monotone(args[0]); }
  if (head == "noisy") { need(2); return noisy(args[0], std::uint64_t(args[1])); }
  if (head == "random") { need(1); return random(std::uint64_t(args[0])); }
  throw Error(ErrorCode::ConfigError, "unknown fake model '" + std::string(spec) + "'");
}

std::string FakeModel::name() const {
  switch (kind) {
  case FakeKind::Identity: return "identity";
  case FakeKind::Affine: return "affine(" + fmt(a) + "," + fmt(b) + ")";
  case FakeKind::Monotone: return "monotone(" + fmt(gamma) + ")";
  case FakeKind::Noisy: return "noisy(" + fmt(sigma) + "," + std::to_string(seed) + ")";
  case FakeKind::Inverted: return "inverted";
  case FakeKind::Random: return "random(" + std::to_string(seed) + ")";
  }
  return "?";
}

DepthMap fake_model(const DepthMap& gt, const FakeModel& m) {
  if (m.kind == FakeKind::Identity) return gt;
  if (m.kind == FakeKind::Monotone && !(m.gamma > 0)) {
    throw Error(ErrorCode::ConfigError, "monotone gamma must be > 0");
  }
  if (m.kind == FakeKind::Affine && !(m.a > 0)) {
    throw Error(ErrorCode::ConfigError, "affine scale must be > 0");
  }
  DepthMap out(gt.width, gt.height, DepthKind::InverseRelative);
  out.valid = gt.valid;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (!gt.valid[i]) continue;
    const double g = gt.values[i];
    const double v = gt.kind == DepthKind::MetricMeters ? 1.0 / g : g;
    double r = v;
    switch (m.kind) {
    case FakeKind::Identity: break;
    case FakeKind::Affine: r = m.a * v + m.b; break;
    case FakeKind::Monotone: r = std::pow(v, m.gamma); break;
    case FakeKind::Noisy: {
      auto rng = pixel_rng(m.seed, i);
      r = v * std::exp(m.sigma * standard_normal(rng));
      break;
    }
    case FakeKind::Inverted: r = 1.0 / v; break;
    case FakeKind::Random: {
      auto rng = pixel_rng(m.seed, i);
      r = 0.05 + uniform01(rng);
      break;
    }
    }
    const float f = float(r);
    if (std::isfinite(f) && f != 0.0f) {
      out.values[i] = f;
    } else {
      out.valid.set(i, false);
    }
  }
  return out;
}

} // namespace depthkit::synth
