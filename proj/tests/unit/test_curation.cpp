#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "depthkit/curation.hpp"
#include "depthkit/depthio.hpp"
#include "depthkit/error.hpp"
#include "support/test_util.hpp"

using namespace depthkit;
using testing_util::TempDir;

namespace {

ScalarMap random_loss(std::mt19937_64& rng, int w, int h, int levels = 0) {
  ScalarMap m(w, h);
  for (auto& v : m.values) {
    v = levels ? double(uniform_below(rng, std::uint64_t(levels))) : uniform01(rng);
  }
  return m;
}

ValidMask random_mask(std::mt19937_64& rng, int w, int h, double p_valid) {
  ValidMask m(w, h);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, uniform01(rng) < p_valid);
  return m;
}

} // namespace

TEST(MaskTopLoss, HundredPixelsTenPercent) {
  auto rng = seeded_rng(1);
  ScalarMap loss = random_loss(rng, 10, 10);
  auto [mask, report] = mask_top_loss(loss, ValidMask(10, 10, true), {});
  EXPECT_EQ(report.pixels_masked, 10u);
  EXPECT_EQ(mask.count(), 90u);
}

TEST(MaskTopLoss, ZeroFractionIsIdentity) {
  auto rng = seeded_rng(2);
  ValidMask in = random_mask(rng, 7, 7, 0.7);
  CurationConfig cfg;
  cfg.n = 0;
  auto [mask, report] = mask_top_loss(random_loss(rng, 7, 7), in, cfg);
  EXPECT_EQ(mask, in);
  EXPECT_FALSE(report.loss_threshold.has_value());
}

TEST(MaskTopLoss, AllEqualLossesMaskHighestIndex) {
  ScalarMap loss(5, 2);
  ValidMask in(5, 2, true);
  auto [mask, report] = mask_top_loss(loss, in, {});
  EXPECT_EQ(report.pixels_masked, 1u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(mask[i], i != 9) << i;
}

// Enumerate every 1- and 2-element selection among ties: only the
// highest-index choice is consistent with "lower index retained first".
TEST(MaskTopLoss, TieRuleEnumerationOracle) {
  ScalarMap loss(4, 1);
  loss.values = {0.5, 0.5, 0.5, 0.1};
  ValidMask in(4, 1, true);
  CurationConfig cfg;
  cfg.n = 0.5;
  auto [mask, report] = mask_top_loss(loss, in, cfg);
  ASSERT_EQ(report.pixels_masked, 2u);
  std::vector<std::vector<std::size_t>> candidates;
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) {
      // a valid selection takes the largest losses
      if (loss.values[a] >= 0.5 && loss.values[b] >= 0.5) candidates.push_back({a, b});
    }
  }
  // the retained tie has the lowest index
  auto chosen = *std::max_element(candidates.begin(), candidates.end());
  for (std::size_t i = 0; i < 4; ++i) {
    const bool masked = std::find(chosen.begin(), chosen.end(), i) != chosen.end();
    EXPECT_EQ(mask[i], !masked);
  }
}

TEST(MaskTopLoss, ContractOnRandomMaps) {
  auto rng = seeded_rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 1 + int(uniform_below(rng, 20)), h = 1 + int(uniform_below(rng, 20));
    ScalarMap loss = random_loss(rng, w, h, trial % 2 ? 5 : 0);
    ValidMask in = random_mask(rng, w, h, 0.8);
    ValidMask prev = in;
    for (double n : {0.0, 0.1, 0.25}) {
      CurationConfig cfg;
      cfg.n = n;
      auto [mask, report] = mask_top_loss(loss, in, cfg);
      const std::size_t valid = in.count();
      EXPECT_EQ(report.pixels_masked, std::size_t(std::floor(n * double(valid))));
      EXPECT_EQ(mask.count(), valid - report.pixels_masked);
      double min_masked = INFINITY, max_kept = -INFINITY;
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (!in[i]) {
          EXPECT_FALSE(mask[i]);
          continue;
        }
        if (mask[i]) {
          max_kept = std::max(max_kept, loss.values[i]);
        } else {
          min_masked = std::min(min_masked, loss.values[i]);
        }
        // nesting: nothing masked earlier comes back
        if (!prev[i]) EXPECT_FALSE(mask[i]);
      }
      if (report.pixels_masked) {
        EXPECT_GE(min_masked, max_kept);
        EXPECT_EQ(*report.loss_threshold, min_masked);
      }
      prev = mask;
    }
  }
}

TEST(MaskTopLoss, RejectsBadFraction) {
  CurationConfig cfg;
  cfg.n = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.n = -0.1;
  EXPECT_THROW(cfg.validate(), Error);
}

namespace {

PredictionManifest write_set(const std::filesystem::path& dir, const std::string& tag,
                             const std::vector<std::pair<std::string, DepthMap>>& maps) {
  PredictionManifest man;
  man.source_tag = tag;
  std::filesystem::create_directories(dir);
  for (const auto& [id, m] : maps) {
    save_depth(m, dir / (id + ".pfm"), DepthFormat::PFM);
    std::ofstream(dir / (id + ".png")) << "img";
    man.entries.push_back({id, dir / (id + ".png"), dir / (id + ".pfm"), std::nullopt});
  }
  save_manifest(man, dir / "manifest.jsonl");
  return load_manifest(dir / "manifest.jsonl");
}

} // namespace

TEST(CurateDataset, PlantedBlobsAreMasked) {
  TempDir dir("cur");
  auto rng = seeded_rng(8);
  std::vector<std::pair<std::string, DepthMap>> teacher, ref;
  std::vector<std::vector<std::size_t>> blobs;
  for (int k = 0; k < 3; ++k) {
    DepthMap r = testing_util::random_map(rng, 10, 10, 0.0, DepthKind::InverseRelative, 1.0, 2.0);
    DepthMap t = r;
    std::vector<std::size_t> blob;
    for (int y = 2 * k; y < 2 * k + 2; ++y) {
      for (int x = 3; x < 8; ++x) {
        blob.push_back(t.index(x, y));
        t.values[t.index(x, y)] += 50.0f;
      }
    }
    teacher.push_back({"img" + std::to_string(k), t});
    ref.push_back({"img" + std::to_string(k), r});
    blobs.push_back(blob);
  }
  auto tm = write_set(dir / "teacher", "teacher", teacher);
  auto rm = write_set(dir / "ref", "ref", ref);
  CurationConfig cfg;
  cfg.loss_kind = CurationLoss::AbsDiff;
  auto res = curate_dataset(tm, rm, cfg, dir / "out", 2);
  ASSERT_EQ(res.reports.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(res.reports[std::size_t(k)].pixels_masked, 10u);
    DepthMap curated = load_entry_depth(res.manifest, res.manifest.entries[std::size_t(k)]);
    for (std::size_t i : blobs[std::size_t(k)]) EXPECT_FALSE(curated.valid[i]);
    EXPECT_EQ(curated.valid.count(), 90u);
  }
}

TEST(CurateDataset, IdenticalMapsStillMaskByTieRuleAndEmptyWorks) {
  TempDir dir("cur");
  auto rng = seeded_rng(9);
  DepthMap m = testing_util::random_map(rng, 6, 5);
  auto tm = write_set(dir / "t", "t", {{"a", m}});
  auto rm = write_set(dir / "r", "r", {{"a", m}});
  auto res = curate_dataset(tm, rm, {}, dir / "out");
  EXPECT_EQ(res.reports[0].pixels_masked, 3u);
  DepthMap curated = load_entry_depth(res.manifest, res.manifest.entries[0]);
  EXPECT_FALSE(curated.valid[29]);
  EXPECT_FALSE(curated.valid[28]);
  EXPECT_FALSE(curated.valid[27]);

  PredictionManifest empty;
  auto none = curate_dataset(empty, empty, {}, dir / "out2");
  EXPECT_TRUE(none.manifest.entries.empty());
  EXPECT_TRUE(none.reports.empty());
}

TEST(CurateDataset, MissingCounterpartNamesImage) {
  TempDir dir("cur");
  DepthMap m = DepthMap::from_values(2, 2, {1, 2, 3, 4});
  auto tm = write_set(dir / "t", "t", {{"a", m}, {"only_teacher", m}});
  auto rm = write_set(dir / "r", "r", {{"a", m}});
  try {
    curate_dataset(tm, rm, {}, dir / "out");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCounterpart);
    EXPECT_NE(std::string(e.what()).find("only_teacher"), std::string::npos);
  }
}
