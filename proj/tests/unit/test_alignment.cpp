#include <gtest/gtest.h>

#include "depthkit/alignment.hpp"
#include "depthkit/error.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace depthkit;

namespace {

DepthMap map_of(std::vector<float> v) {
  const int w = int(v.size());
  return DepthMap::from_values(w, 1, std::move(v));
}

ValidMask full(const DepthMap& m) { return m.valid; }

std::pair<std::vector<double>, std::vector<double>> gather(const DepthMap& p, const DepthMap& r,
                                                           const ValidMask& m) {
  std::vector<double> a, b;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) {
      a.push_back(p.values[i]);
      b.push_back(r.values[i]);
    }
  }
  return {a, b};
}

} // namespace

TEST(Lsq, IdentityGivesUnitScaleZeroShift) {
  DepthMap p = map_of({1, 2, 3, 5});
  auto f = fit_scale_shift_lsq(p, p, full(p));
  EXPECT_NEAR(f.scale, 1.0, 1e-12);
  EXPECT_NEAR(f.shift, 0.0, 1e-12);
}

TEST(Lsq, ExactAffineRecovered) {
  DepthMap p = map_of({1, 2, 3, 5, 8});
  DepthMap r = map_of({5, 7, 9, 13, 19});
  auto f = fit_scale_shift_lsq(p, r, full(p));
  EXPECT_NEAR(f.scale, 2.0, 1e-12);
  EXPECT_NEAR(f.shift, 3.0, 1e-12);
}

TEST(Lsq, DegenerateInputs) {
  DepthMap c = map_of({2, 2, 2});
  DepthMap r = map_of({1, 2, 3});
  EXPECT_THROW(fit_scale_shift_lsq(c, r, full(c)), Error);
  DepthMap one = DepthMap::from_values(2, 1, {1.0f, 0.0f});
  try {
    fit_scale_shift_lsq(one, one, one.valid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateFit);
  }
}

TEST(Lsq, MatchesGridAndNormalEquationOracles) {
  auto rng = seeded_rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    DepthMap p = testing_util::random_map(rng, 8, 8, 0.0);
    DepthMap r = testing_util::random_map(rng, 8, 8, 0.3);
    ValidMask m = p.valid & r.valid;
    auto [a, b] = gather(p, r, m);
    auto f = fit_scale_shift_lsq(p, r, m);
    auto ne = oracle::normal_equations(a, b);
    auto grid = oracle::grid_search(a, b);
    EXPECT_NEAR(f.scale, ne.s, 1e-9);
    EXPECT_NEAR(f.shift, ne.t, 1e-9);
    EXPECT_NEAR(f.scale, grid.s, 1e-4);
    EXPECT_NEAR(f.shift, grid.t, 1e-4);
  }
}

TEST(Lsq, LocallyOptimal) {
  auto rng = seeded_rng(23);
  DepthMap p = testing_util::random_map(rng, 6, 6, 0.1);
  DepthMap r = testing_util::random_map(rng, 6, 6, 0.1);
  ValidMask m = p.valid & r.valid;
  auto [a, b] = gather(p, r, m);
  auto f = fit_scale_shift_lsq(p, r, m);
  const double best = oracle::sse(a, b, f.scale, f.shift);
  for (double ds : {-1e-3, 0.0, 1e-3}) {
    for (double dt : {-1e-3, 0.0, 1e-3}) {
      if (ds == 0 && dt == 0) continue;
      EXPECT_GT(oracle::sse(a, b, f.scale + ds, f.shift + dt), best);
    }
  }
}

TEST(Lsq, AffineEquivariance) {
  auto rng = seeded_rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    DepthMap p = testing_util::random_map(rng, 7, 5, 0.2);
    DepthMap r = testing_util::random_map(rng, 7, 5, 0.2);
    ValidMask m = p.valid & r.valid;
    const double a = testing_util::uniform(rng, 0.2, 5.0) * (trial % 2 ? 1 : -1);
    const double b = testing_util::uniform(rng, -3, 3);
    DepthMap q = p;
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      if (m[i]) q.values[i] = float(a * p.values[i] + b);
    }
    // float storage of q limits agreement; compare against the gathered doubles
    auto [pa, ra] = gather(p, r, m);
    std::vector<double> qa;
    for (double v : pa) qa.push_back(a * v + b);
    auto f = fit_lsq(pa, ra);
    auto g = fit_lsq(qa, ra);
    EXPECT_NEAR(g.scale, f.scale / a, 1e-6 * std::max(1.0, std::abs(f.scale / a)));
    EXPECT_NEAR(g.shift, f.shift - f.scale * b / a, 1e-6 * std::max(1.0, std::abs(f.shift)));
  }
}

TEST(Lsq, InvalidPixelsAreNeverRead) {
  auto rng = seeded_rng(31);
  DepthMap p = testing_util::random_map(rng, 8, 8, 0.3);
  DepthMap r = testing_util::random_map(rng, 8, 8, 0.0);
  ValidMask m = p.valid & r.valid;
  auto before = fit_scale_shift_lsq(p, r, m);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    if (!m[i]) {
      p.values[i] = 1e30f;
      r.values[i] = -7.0f;
    }
  }
  auto after = fit_scale_shift_lsq(p, r, m);
  EXPECT_EQ(before, after);
}

TEST(Robust, IdentityAndMedianMad) {
  DepthMap p = map_of({1, 2, 3, 5});
  auto f = fit_scale_shift_robust(p, p, full(p));
  EXPECT_DOUBLE_EQ(f.scale, 1.0);
  EXPECT_DOUBLE_EQ(f.shift, 0.0);
  std::vector<double> v{1, 2, 3, 4};
  auto loc = median_and_mad(v);
  EXPECT_DOUBLE_EQ(loc.median, 2.5);
  EXPECT_DOUBLE_EQ(loc.mad, 1.0);
}

// A contamination that leaves the ordering of the samples unchanged moves
// neither the median nor the mean absolute deviation, so the robust fit is
// exact while least squares is pulled away.
TEST(Robust, RecoversAffineUnderRankPreservingOutlier) {
  // clean pred {2, 2, 2, 0, 4}; the fourth sample is contaminated
  DepthMap dirty = map_of({2, 2, 2, 4, 4});
  DepthMap ref = map_of({7, 7, 7, 3, 11}); // 2 * clean + 3
  auto robust = fit_scale_shift_robust(dirty, ref, full(ref));
  EXPECT_DOUBLE_EQ(robust.scale, 2.0);
  EXPECT_DOUBLE_EQ(robust.shift, 3.0);
  auto lsq = fit_scale_shift_lsq(dirty, ref, full(ref));
  EXPECT_GT(std::abs(lsq.scale - 2.0) + std::abs(lsq.shift - 3.0), 0.5);
}

TEST(Robust, AllEqualButTwoPixels) {
  // pred median 1, mad 2/5; ref median 10, mad 4/5
  DepthMap p = map_of({1, 1, 1, 0.5f, 2.5f});
  DepthMap r = map_of({10, 10, 10, 9, 13});
  auto f = fit_scale_shift_robust(p, r, full(p));
  EXPECT_NEAR(f.scale, (4.0 / 5.0) / (2.0 / 5.0), 1e-12);
  EXPECT_NEAR(f.shift, 10.0 - f.scale * 1.0, 1e-12);
  DepthMap c = map_of({3, 3, 3});
  EXPECT_THROW(fit_scale_shift_robust(c, map_of({1, 2, 3}), full(c)), Error);
}

TEST(Align, AppliesAtValidPixelsOnly) {
  DepthMap p = DepthMap::from_values(3, 1, {1.0f, 2.0f, 0.0f});
  DepthMap out = align(p, {2, 3});
  EXPECT_EQ(out.values[0], 5.0f);
  EXPECT_EQ(out.values[1], 7.0f);
  EXPECT_FALSE(out.valid[2]);
  EXPECT_EQ(out.valid, p.valid);
  EXPECT_EQ(align(p, {1, 0}), p);
}
