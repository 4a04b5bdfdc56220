// Acceptance suite: prints one PASS/FAIL line per criterion, exits nonzero on
// any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "depthkit/alignment.hpp"
#include "depthkit/annotation.hpp"
#include "depthkit/benchmark.hpp"
#include "depthkit/curation.hpp"
#include "depthkit/error.hpp"
#include "depthkit/losses.hpp"
#include "depthkit/metrics.hpp"
#include "depthkit/random.hpp"
#include "depthkit/synthgen.hpp"
#include "support/oracles.hpp"
#include "support/run_cli.hpp"
#include "support/test_util.hpp"

using namespace depthkit;
namespace tu = depthkit::testing_util;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_++ < 5) first_ += (first_.empty() ? "" : "; ") + what;
  }
  Outcome done(const std::string& summary) const {
    if (failures_ == 0) return {true, summary};
    return {false, std::to_string(failures_) + " violation(s): " + first_};
  }

private:
  std::size_t failures_ = 0;
  std::string first_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

DepthMap transformed(const DepthMap& m, const std::function<double(double)>& f) {
  DepthMap out = m;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.valid[i]) out.values[i] = float(f(out.values[i]));
  }
  return out;
}

double metric_gap(const MetricValues& a, const MetricValues& b) {
  return std::max({std::abs(a.abs_rel - b.abs_rel), std::abs(a.delta1 - b.delta1),
                   std::abs(a.delta2 - b.delta2), std::abs(a.delta3 - b.delta3),
                   std::abs(a.rmse - b.rmse), std::abs(a.rmse_log - b.rmse_log),
                   std::abs(a.log10 - b.log10)});
}

/// Inverse-depth prediction that is a noisy rendition of a metric map.
DepthMap noisy_inverse(std::mt19937_64& rng, const DepthMap& gt, double sigma) {
  DepthMap out(gt.width, gt.height);
  out.valid = gt.valid;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (gt.valid[i]) out.values[i] = float(std::exp(sigma * standard_normal(rng)) / gt.values[i]);
  }
  return out;
}

double relative_gap(const MetricValues& a, const MetricValues& b) {
  const auto rel = [](double x, double y) { return std::abs(x - y) / std::max(1.0, std::abs(x)); };
  return std::max({rel(a.abs_rel, b.abs_rel), rel(a.delta1, b.delta1), rel(a.delta2, b.delta2),
                   rel(a.delta3, b.delta3), rel(a.rmse, b.rmse), rel(a.rmse_log, b.rmse_log),
                   rel(a.log10, b.log10)});
}

// Maps store float32, so a*pred+b is generally rounded on storage. The strict
// check quantizes predictions to 1/4096 and draws a, b on a 1/64 grid so the
// transformed map is exact. A second pass with real-valued a, b only reports
// the storage-rounding effect (a delta can step by one pixel).
Outcome affine_invariance() {
  const auto start = std::chrono::steady_clock::now();
  auto rng = seeded_rng(1001);
  Check c;
  double worst_ssi = 0, worst_metric = 0, worst_rounded = 0;
  std::size_t inexact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = 8 + int(uniform_below(rng, 25)), h = 8 + int(uniform_below(rng, 25));
    DepthMap gt = tu::random_map(rng, w, h, 0.1, DepthKind::MetricMeters, 0.5, 20);
    DepthMap pred = noisy_inverse(rng, gt, 0.2);
    for (auto& v : pred.values) v = std::round(v * 4096.0f) / 4096.0f;
    DepthMap ref = to_inverse(gt);
    const double a = double(7 + uniform_below(rng, 506)) / 64.0;
    const double b = (double(uniform_below(rng, 129)) - 64.0) / 64.0;
    DepthMap moved = transformed(pred, [&](double v) { return a * v + b; });
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
      if (pred.valid[i]) inexact += double(moved.values[i]) != a * double(pred.values[i]) + b;
    }

    const double s0 = ssi_loss(pred, ref, gt.valid).loss, s1 = ssi_loss(moved, ref, gt.valid).loss;
    worst_ssi = std::max(worst_ssi, std::abs(s0 - s1));
    const double ra = std::exp(tu::uniform(rng, std::log(0.1), std::log(10.0)));
    const double rb = tu::uniform(rng, -1, 1);
    DepthMap rounded = transformed(pred, [&](double v) { return ra * v + rb; });
    for (AlignmentMethod m : {AlignmentMethod::LeastSquares, AlignmentMethod::Robust}) {
      EvalConfig cfg;
      cfg.alignment = m;
      const auto r0 = evaluate_image(pred, gt, cfg);
      worst_metric = std::max(worst_metric, metric_gap(r0.values, evaluate_image(moved, gt, cfg).values));
      worst_rounded = std::max(worst_rounded, relative_gap(r0.values, evaluate_image(rounded, gt, cfg).values));
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.expect(inexact == 0, std::to_string(inexact) + " transformed values were rounded");
  c.expect(worst_ssi < 1e-6, "ssi moved by " + fmt(worst_ssi));
  c.expect(worst_metric < 1e-6, "a metric moved by " + fmt(worst_metric));
  c.expect(secs < 30, "took " + fmt(secs) + " s");
  return c.done("1000 maps, lsq and robust: max |dssi| " + fmt(worst_ssi) + ", max |dmetric| " +
                fmt(worst_metric) + "; real-valued a,b after float32 storage (informational): " +
                fmt(worst_rounded) + " relative; " + fmt(secs) + " s");
}

Outcome alignment_oracle() {
  auto rng = seeded_rng(1002);
  Check c;
  double worst = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int w = 2 + int(uniform_below(rng, 7)), h = 1 + int(uniform_below(rng, 8));
    DepthMap pred = tu::random_map(rng, w, h, 0.15);
    DepthMap ref = tu::random_map(rng, w, h, 0.0);
    const double s = tu::uniform(rng, -3, 3), t = tu::uniform(rng, -2, 2);
    for (std::size_t i = 0; i < ref.values.size(); ++i) {
      ref.values[i] = float(s * pred.values[i] + t + tu::uniform(rng, -0.5, 0.5));
    }
    std::vector<double> p, r;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
      if (pred.valid[i]) {
        p.push_back(pred.values[i]);
        r.push_back(ref.values[i]);
      }
    }
    if (p.size() < 2) continue;
    const auto fit = fit_scale_shift_lsq(pred, ref, pred.valid);
    const auto ne = oracle::normal_equations(p, r);
    const auto grid = oracle::grid_search(p, r);
    for (const auto& o : {ne, grid}) {
      worst = std::max({worst, std::abs(fit.scale - o.s), std::abs(fit.shift - o.t)});
    }
  }
  c.expect(worst <= 1e-4, "deviation " + fmt(worst));
  return c.done("500 maps, max |ds|,|dt| " + fmt(worst));
}

Outcome metric_oracle() {
  auto rng = seeded_rng(1003);
  Check c;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 2 + int(uniform_below(rng, 7)), h = 1 + int(uniform_below(rng, 8));
    DepthMap gt = tu::random_map(rng, w, h, 0.1, DepthKind::MetricMeters, 0.5, 20);
    DepthMap pred = noisy_inverse(rng, gt, 0.4);
    std::vector<double> p, inv_gt, g;
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
      if (!gt.valid[i]) continue;
      p.push_back(pred.values[i]);
      g.push_back(gt.values[i]);
      inv_gt.push_back(1.0 / double(gt.values[i]));
    }
    if (p.size() < 2) continue;
    const auto fit = oracle::normal_equations(p, inv_gt);
    const double floor_value = *std::min_element(inv_gt.begin(), inv_gt.end()) * 1e-3;
    std::vector<double> depth;
    for (double v : p) {
      double a = fit.s * v + fit.t;
      if (a <= 0) a = floor_value;
      depth.push_back(1.0 / a);
    }
    const auto o = oracle::depth_metrics(depth, g);
    const auto v = evaluate_image(pred, gt, {}).values;
    worst = std::max(worst, metric_gap(v, {o.abs_rel, o.d1, o.d2, o.d3, o.rmse, o.rmse_log, o.log10}));
    c.expect(v.delta1 <= v.delta2 && v.delta2 <= v.delta3, "delta order broken");
  }
  c.expect(worst <= 1e-9, "deviation " + fmt(worst));
  return c.done("200 maps, max deviation " + fmt(worst) + ", d1<=d2<=d3 on all");
}

Outcome curation_contract() {
  auto rng = seeded_rng(1004);
  Check c;
  std::size_t cases = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 1 + int(uniform_below(rng, 40)), h = 1 + int(uniform_below(rng, 40));
    ScalarMap loss(w, h);
    const bool coarse = trial % 3 == 0; // plenty of ties
    for (auto& v : loss.values) v = coarse ? double(uniform_below(rng, 5)) : uniform01(rng);
    ValidMask mask(w, h, false);
    std::size_t valid = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const bool on = uniform01(rng) < 0.8;
      mask.set(i, on);
      valid += on;
    }
    ValidMask previous = mask;
    for (double n : {0.0, 0.1, 0.25}) {
      CurationConfig cfg;
      cfg.n = n;
      auto [kept, report] = mask_top_loss(loss, mask, cfg);
      const std::size_t expected = std::size_t(std::floor(n * double(valid)));
      double min_masked = INFINITY, max_kept = -INFINITY;
      std::size_t masked = 0;
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) {
          c.expect(!kept[i], "invalid pixel revived");
          continue;
        }
        if (kept[i]) {
          max_kept = std::max(max_kept, loss.values[i]);
        } else {
          ++masked;
          min_masked = std::min(min_masked, loss.values[i]);
        }
        c.expect(!kept[i] || previous[i], "not nested under increasing n");
      }
      c.expect(masked == expected && report.pixels_masked == expected,
               "masked " + std::to_string(masked) + " expected " + std::to_string(expected));
      c.expect(masked == 0 || min_masked >= max_kept, "masked a lower loss than a retained one");
      previous = kept;
      ++cases;
    }
  }
  return c.done(std::to_string(cases) + " cases over n in {0, 0.1, 0.25}");
}

Outcome loss_weighting() {
  auto rng = seeded_rng(1005);
  Check c;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    DepthMap ref = tu::random_map(rng, 32, 24, 0.05);
    DepthMap pred = tu::random_map(rng, 32, 24, 0.05);
    const ValidMask mask = ref.valid & pred.valid;
    const auto report = combined_loss(pred, ref, mask);
    const double ssi = ssi_loss(pred, ref, mask).loss;
    const double gm = gradient_matching_loss(pred, ref, mask).total;
    worst = std::max({worst, std::abs(report.total - (ssi + 2.0 * gm)),
                      std::abs(report.total - (report.ssi + 2.0 * report.gm))});
  }
  LossConfig defaults;
  c.expect(defaults.ssi_weight == 1.0 && defaults.gm_weight == 2.0, "defaults are not 1:2");
  c.expect(worst <= 1e-12, "deviation " + fmt(worst));
  return c.done("100 maps, total == ssi + 2*gm within " + fmt(worst));
}

DepthMap box_blur(const DepthMap& m, int radius) {
  DepthMap out = m;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.is_valid(x, y)) continue;
      double sum = 0;
      int n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= m.width || yy >= m.height || !m.is_valid(xx, yy)) continue;
          sum += m.at(xx, yy);
          ++n;
        }
      }
      out.values[out.index(x, y)] = float(sum / n);
    }
  }
  return out;
}

Outcome gradient_sharpness() {
  // a box standing in front of a wall: strong depth discontinuities
  synth::SceneSpec spec;
  spec.width = 64;
  spec.height = 48;
  spec.camera = synth::default_camera(64, 48);
  spec.primitives.push_back({synth::Plane{{0, 0, 9}, {0, 0, -1}}});
  spec.primitives.push_back({synth::Box{{0, 0, 4}, {1.0, 0.8, 0.5}, 0.3}});
  spec.primitives.push_back({synth::Sphere{{-2.2, 0.6, 6}, 0.9}});
  const DepthMap ref = to_inverse(synth::render_depth(spec));
  auto rng = seeded_rng(1006);
  std::vector<double> noise(ref.values.size());
  for (auto& n : noise) n = 1e-3 * standard_normal(rng);
  const auto predict = [&](const DepthMap& m) {
    DepthMap out = m;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      if (out.valid[i]) out.values[i] = float(2.0 * m.values[i] + 1.0 + noise[i]);
    }
    return out;
  };
  Check c;
  const double sharp = gradient_matching_loss(predict(ref), ref, ref.valid).total;
  std::string summary = "gm exact " + fmt(sharp);
  for (int radius : {1, 2, 3}) {
    const double blurred = gradient_matching_loss(predict(box_blur(ref, radius)), ref, ref.valid).total;
    c.expect(blurred > sharp, "radius " + std::to_string(radius) + " not penalised");
    summary += ", r" + std::to_string(radius) + " " + fmt(blurred);
  }
  return c.done(summary);
}

struct Scene {
  std::string id;
  synth::Render render;
};

std::vector<Scene> scenes(std::uint64_t seed, int count) {
  std::vector<Scene> out;
  for (int i = 0; i < count; ++i) {
    out.push_back({"scene" + std::to_string(i), synth::render(synth::random_scene(seed + std::uint64_t(i), 64, 48))});
  }
  return out;
}

std::vector<ImageKeypoints> keypoints_of(const std::vector<Scene>& ss, std::size_t per_mask) {
  std::vector<ImageKeypoints> out;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    out.push_back({ss[i].id, 64, 48, kAllScenarios[i % kScenarioCount],
                   synth::sample_keypoints(ss[i].render, per_mask, 77 + i)});
  }
  return out;
}

std::vector<ModelPredictions> models_of(const std::vector<Scene>& ss, const std::vector<synth::FakeModel>& fakes) {
  std::vector<ModelPredictions> out;
  for (const auto& f : fakes) {
    ModelPredictions mp;
    mp.tag = f.name();
    for (const auto& s : ss) mp.maps.emplace(s.id, synth::fake_model(s.render.depth, f));
    out.push_back(std::move(mp));
  }
  return out;
}

double raw_depth(const DepthMap& m, Pixel p) {
  const double v = m.at(p.x, p.y);
  return m.kind == DepthKind::InverseRelative ? 1.0 / v : v;
}

/// Brute-force vote tallies straight from the maps.
struct BruteVote {
  bool any_eligible = false;
  bool disputed = false;
  bool first_closer = false;
};

BruteVote brute_vote(const PointPair& p, const std::vector<ModelPredictions>& models, double threshold) {
  BruteVote b;
  std::set<bool> calls;
  for (const auto& m : models) {
    const DepthMap& map = m.maps.at(p.image_id);
    const double d1 = raw_depth(map, p.p1), d2 = raw_depth(map, p.p2);
    if (std::max(d1 / d2, d2 / d1) > threshold && d1 != d2) {
      b.any_eligible = true;
      calls.insert(d1 < d2);
    }
  }
  b.disputed = calls.size() > 1;
  b.first_closer = !calls.empty() && *calls.begin();
  return b;
}

Outcome benchmark_end_to_end() {
  Check c;
  const auto ss = scenes(500, 6);
  const auto images = keypoints_of(ss, 6);
  const std::size_t per_image = 80;
  const auto pairs = sample_pairs(images, 9, per_image).pairs;
  std::map<std::string, const Scene*> by_id;
  for (const auto& s : ss) by_id[s.id] = &s;

  const std::vector<synth::FakeModel> monotone{synth::FakeModel::identity(), synth::FakeModel::monotone(2.0),
                                               synth::FakeModel::affine(2, 3), synth::FakeModel::monotone(0.5)};
  VotingConfig loose;
  loose.ratio_threshold = 1.3;

  // four order-preserving models
  const auto agree = models_of(ss, monotone);
  const auto b1 = build_benchmark(images, agree, {}, loose, 9, per_image);
  c.expect(b1.votes.size() == pairs.size(), "sampling differs from sample_pairs");
  c.expect(b1.disagreements == 0, std::to_string(b1.disagreements) + " disagreements");
  std::size_t matched = 0;
  for (const auto& p : b1.pairs) {
    const DepthMap& gt = by_id.at(p.image_id)->render.depth;
    const bool first = gt.at(p.p1.x, p.p1.y) < gt.at(p.p2.x, p.p2.y);
    const bool ok = p.label == (first ? PairLabel::FirstCloser : PairLabel::SecondCloser);
    c.expect(ok, p.pair_id + " mislabeled");
    matched += ok;
  }
  c.expect(!b1.pairs.empty(), "no eligible pairs");

  // plant an inverted model
  auto planted = monotone;
  planted[3] = synth::FakeModel::inverted();
  const auto flip = models_of(ss, planted);
  const auto b2 = build_benchmark(images, flip, {}, loose, 9, per_image);
  std::set<std::string> expected, queued;
  for (const auto& p : pairs) {
    const DepthMap& gt = by_id.at(p.image_id)->render.depth;
    const DepthMap& inv = flip[3].maps.at(p.image_id);
    const double g1 = gt.at(p.p1.x, p.p1.y), g2 = gt.at(p.p2.x, p.p2.y);
    const double i1 = raw_depth(inv, p.p1), i2 = raw_depth(inv, p.p2);
    const bool inverted_votes = std::max(i1 / i2, i2 / i1) > loose.ratio_threshold;
    const bool flips = (i1 < i2) != (g1 < g2);
    bool other_votes = false;
    for (int k = 0; k < 3; ++k) {
      const DepthMap& m = flip[std::size_t(k)].maps.at(p.image_id);
      const double d1 = raw_depth(m, p.p1), d2 = raw_depth(m, p.p2);
      other_votes |= std::max(d1 / d2, d2 / d1) > loose.ratio_threshold;
    }
    if (inverted_votes && flips && other_votes) expected.insert(p.pair_id);
  }
  for (const auto& p : b2.queue) queued.insert(p.pair_id);
  c.expect(queued == expected, "queued " + std::to_string(queued.size()) + " vs flipped " +
                                   std::to_string(expected.size()));
  c.expect(!expected.empty(), "the inverted model never flipped an eligible pair");

  // the 3.0 gate drops exactly the pairs no model sees above ratio 3
  const VotingConfig strict; // 3.0
  const auto b3 = build_benchmark(images, agree, {}, strict, 9, per_image);
  std::set<std::string> dropped(b3.dropped.begin(), b3.dropped.end()), below;
  for (const auto& p : pairs) {
    if (!brute_vote(p, agree, 3.0).any_eligible) below.insert(p.pair_id);
  }
  c.expect(dropped == below, "gate dropped " + std::to_string(dropped.size()) + " vs " +
                                 std::to_string(below.size()) + " at or below 3");
  c.expect(dropped.size() < pairs.size(), "gate dropped everything");
  return c.done(std::to_string(matched) + "/" + std::to_string(b1.pairs.size()) +
                " consensus labels match ground truth; inverted model queued " +
                std::to_string(queued.size()) + " flipped pairs; gate 3.0 dropped " +
                std::to_string(dropped.size()) + "/" + std::to_string(pairs.size()));
}

bool same_report(const AccuracyReport& a, const AccuracyReport& b) {
  if (a.overall.correct != b.overall.correct || a.overall.labeled != b.overall.labeled) return false;
  for (std::size_t s = 0; s < kScenarioCount; ++s) {
    if (a.per_scenario[s].correct != b.per_scenario[s].correct) return false;
  }
  return true;
}

Outcome pair_accuracy_invariance() {
  Check c;
  const auto ss = scenes(900, 12);
  const auto images = keypoints_of(ss, 10);
  auto pairs = sample_pairs(images, 3, 220).pairs;
  std::map<std::string, const Scene*> by_id;
  for (const auto& s : ss) by_id[s.id] = &s;
  std::erase_if(pairs, [&](PointPair& p) {
    const DepthMap& gt = by_id.at(p.image_id)->render.depth;
    const float g1 = gt.at(p.p1.x, p.p1.y), g2 = gt.at(p.p2.x, p.p2.y);
    if (g1 == g2) return true;
    p.label = g1 < g2 ? PairLabel::FirstCloser : PairLabel::SecondCloser;
    p.label_source = LabelSource::HumanConsensus;
    return false;
  });
  if (pairs.size() > 2000) pairs.resize(2000);
  c.expect(pairs.size() == 2000, "only " + std::to_string(pairs.size()) + " labeled pairs");

  const auto score = [&](const synth::FakeModel& f, const std::function<double(double)>& g = {}) {
    ModelPredictions mp{f.name(), {}};
    for (const auto& s : ss) {
      DepthMap m = synth::fake_model(s.render.depth, f);
      if (g) m = transformed(m, g);
      mp.maps.emplace(s.id, std::move(m));
    }
    return pair_accuracy(mp, pairs);
  };
  const double identity = score(synth::FakeModel::identity()).mean();
  const double inverted = score(synth::FakeModel::inverted()).mean();
  const double random = score(synth::FakeModel::random(5)).mean();
  c.expect(identity == 1.0, "identity scored " + fmt(identity));
  c.expect(inverted == 0.0, "inverted scored " + fmt(inverted));
  c.expect(std::abs(random - 0.5) <= 0.05, "random scored " + fmt(random));

  const auto noisy = synth::FakeModel::noisy(0.3, 11);
  const auto base = score(noisy);
  const std::vector<std::pair<std::string, std::function<double(double)>>> transforms{
      {"cube", [](double v) { return v * v * v; }},
      {"affine", [](double v) { return 4.0 * v + 0.5; }},
      {"exp", [](double v) { return std::exp(v); }},
      {"sqrt", [](double v) { return std::sqrt(v); }}};
  for (const auto& [name, g] : transforms) c.expect(same_report(base, score(noisy, g)), name + " changed accuracy");
  return c.done(std::to_string(pairs.size()) + " pairs: identity " + fmt(identity) + ", inverted " +
                fmt(inverted) + ", random " + fmt(random) + ", noisy " + fmt(base.mean()) +
                " unchanged under 4 increasing transforms");
}

Outcome service_state_machine() {
  Check c;
  tu::TempDir dir("acceptance_service");
  std::int64_t now = 0;
  ServiceOptions opts;
  opts.lease_ms = 1000;
  opts.clock = [&] { return now; };
  opts.log_path = dir / "events.jsonl";
  AnnotationService svc(opts);
  const std::vector<std::string> annotators{"ann_a", "ann_b", "ann_c"};
  for (const auto& a : annotators) svc.register_annotator(a);
  std::vector<PointPair> pairs;
  for (int i = 0; i < 3000; ++i) {
    PointPair p;
    p.pair_id = "p" + std::to_string(i);
    p.image_id = "img" + std::to_string(i % 17);
    p.p1 = {i % 50, 3};
    p.p2 = {7, i % 40 + 1};
    p.scenario = kAllScenarios[std::size_t(i) % kScenarioCount];
    pairs.push_back(p);
  }
  svc.enqueue(pairs);
  const std::size_t base_events = svc.events().size();

  struct Lease {
    std::string holder;
    std::int64_t expiry;
  };
  std::map<std::string, Lease> live; // pair -> outstanding lease we were granted
  auto rng = seeded_rng(1009);
  std::size_t finalized_checked = 0, rejected = 0;
  while (svc.events().size() - base_events < 10000) {
    now += std::int64_t(uniform_below(rng, 60));
    if (uniform_below(rng, 100) == 0) now += 1500; // everyone's lease lapses
    const std::string& who = annotators[uniform_below(rng, annotators.size())];
    const auto state = svc.state();
    const PairState* held = state.held_by(who);
    const std::uint64_t roll = uniform_below(rng, 100);
    try {
      if (held && held->lease_expiry_ms > now && roll < 80) {
        const std::uint64_t d = uniform_below(rng, 20);
        const Decision dec = d < 16 ? Decision::FirstCloser : d < 18 ? Decision::SecondCloser : Decision::Skip;
        svc.submit(who, held->pair.pair_id, dec);
        live.erase(held->pair.pair_id);
      } else if (roll < 90 || !held) {
        if (auto claim = svc.claim_next(who)) {
          const auto it = live.find(claim->pair.pair_id);
          if (it != live.end() && it->second.holder != who) {
            c.expect(it->second.expiry <= now, "lease on " + claim->pair.pair_id + " double-assigned");
          }
          for (const auto& [pid, lease] : live) {
            if (lease.holder == who && pid != claim->pair.pair_id) {
              c.expect(lease.expiry <= now, who + " holds two live leases");
            }
          }
          live[claim->pair.pair_id] = {who, claim->lease_expiry_ms};
        }
      } else {
        // illegal on purpose: submit for a pair this annotator does not hold
        const std::string pid = "p" + std::to_string(uniform_below(rng, 3000));
        if (!held || held->pair.pair_id != pid) {
          svc.submit(who, pid, Decision::FirstCloser);
          const auto* ps = svc.state().find(pid);
          c.expect(false, "illegal submit on " + pid + " accepted (" + std::string(to_string(ps->status)) + ")");
        }
      }
    } catch (const Error&) {
      ++rejected;
    }
  }

  const auto state = svc.state();
  std::map<std::string, int> holders;
  for (const auto& [pid, ps] : state.pairs()) {
    if (ps.status == PairStatus::Claimed) holders[ps.holder]++;
    if (ps.status != PairStatus::Finalized) continue;
    ++finalized_checked;
    bool ok = ps.records.size() == 3 && ps.records[0].role == AnnotatorRole::Primary &&
              ps.records[1].role == AnnotatorRole::Verifier && ps.records[2].role == AnnotatorRole::Verifier;
    std::set<std::string> who;
    for (const auto& r : ps.records) {
      who.insert(r.annotator_id);
      ok = ok && r.decision == ps.records[0].decision && r.decision != Decision::Skip;
    }
    ok = ok && who.size() == 3;
    c.expect(ok, pid + " finalized without 1 primary + 2 agreeing verifiers");
  }
  for (const auto& [who, n] : holders) c.expect(n <= 1, who + " holds " + std::to_string(n) + " claims");

  const auto replayed = replay(load_event_log(dir / "events.jsonl"));
  c.expect(replayed == state, "log replay diverged from live state");
  c.expect(replayed.to_json().dump() == state.to_json().dump(), "replayed state serializes differently");
  c.expect(finalized_checked > 100, "only " + std::to_string(finalized_checked) + " pairs finalized");
  return c.done(std::to_string(svc.events().size() - base_events) + " events, " +
                std::to_string(finalized_checked) + " finalized pairs verified, " + std::to_string(rejected) +
                " illegal actions rejected, replay identical");
}

Outcome cli_determinism() {
  Check c;
  tu::TempDir a("acc_det_a"), b("acc_det_b"), d("acc_det_c");
  const auto run = [&](const tu::TempDir& dir, const std::string& threads) {
    for (const auto& r : tu::run_pipeline(dir.path(), threads, "23")) {
      c.expect(r.exit_code == 0, "pipeline step failed: " + r.output.substr(0, 200));
    }
    return tu::tree_contents(dir.path());
  };
  const auto ta = run(a, "1"), tb = run(b, "1"), tc = run(d, "4");
  c.expect(ta == tb, "two runs differ");
  c.expect(ta == tc, "--threads 1 and --threads 4 differ");
  std::size_t bytes = 0;
  for (const auto& [name, content] : ta) bytes += content.size();
  return c.done(std::to_string(ta.size()) + " output files (" + std::to_string(bytes) +
                " bytes) identical across 2 runs and 1 vs 4 threads");
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"affine-invariance", affine_invariance},
      {"alignment-oracle", alignment_oracle},
      {"metric-oracle", metric_oracle},
      {"curation-contract", curation_contract},
      {"loss-weighting", loss_weighting},
      {"gradient-sharpness", gradient_sharpness},
      {"benchmark-end-to-end", benchmark_end_to_end},
      {"pair-accuracy-invariance", pair_accuracy_invariance},
      {"service-state-machine", service_state_machine},
      {"cli-determinism", cli_determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  }
  std::cout << (criteria.size() - std::size_t(failed)) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
