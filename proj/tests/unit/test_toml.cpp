#include <gtest/gtest.h>

#include "depthkit/error.hpp"
#include "depthkit/losses.hpp"
#include "depthkit/metrics.hpp"
#include "depthkit/scenarios.hpp"
#include "depthkit/toml_lite.hpp"

using namespace depthkit;

TEST(Toml, ParsesTablesArraysAndComments) {
  const auto t = toml::parse(R"(
# top comment
name = "demo" # trailing
[losses]
ssi_weight = 1.0
gm_scales = 4
[eval.clamps]
max_depth = 80
flags = [true, false]
vals = [
  1, 2.5,
  3,
]
[[primitive]]
type = "plane"
[[primitive]]
type = "sphere"
)");
  EXPECT_EQ(t.string("name"), "demo");
  ASSERT_NE(t.table("losses"), nullptr);
  EXPECT_EQ(t.table("losses")->integer("gm_scales"), 4);
  const toml::Table* clamps = t.table("eval")->table("clamps");
  ASSERT_NE(clamps, nullptr);
  EXPECT_EQ(clamps->number("max_depth"), 80.0);
  EXPECT_EQ(clamps->numbers("vals"), (std::vector<double>{1, 2.5, 3}));
  auto prims = t.tables("primitive");
  ASSERT_EQ(prims.size(), 2u);
  EXPECT_EQ(prims[1]->string("type"), "sphere");
}

TEST(Toml, ErrorsAreConfigErrors) {
  for (const char* bad : {"a = ", "[unclosed", "a = \"open", "a = 1\na = 2", "= 3"}) {
    try {
      toml::parse(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ConfigError) << bad;
    }
  }
}

TEST(Toml, LossConfigKeysAreRead) {
  LossConfig cfg;
  cfg.update_from(toml::parse("ssi_weight = 0.5\ngm_weight = 3\ngm_scales = 2\n"
                              "trim_fraction = 0.2\nfeat_align_margin = 0.5\n"));
  EXPECT_EQ(cfg.ssi_weight, 0.5);
  EXPECT_EQ(cfg.gm_weight, 3.0);
  EXPECT_EQ(cfg.gm_scales, 2);
  EXPECT_EQ(cfg.trim_fraction, 0.2);
  EXPECT_EQ(cfg.feat_align_margin, 0.5);
}

TEST(Toml, EvalConfigKeysAreRead) {
  EvalConfig cfg;
  cfg.update_from(toml::parse("alignment = \"robust\"\nspace = \"depth\"\nmax_depth = 80\n"));
  EXPECT_EQ(cfg.alignment, AlignmentMethod::Robust);
  EXPECT_EQ(cfg.space, AlignSpace::Depth);
  EXPECT_EQ(cfg.max_depth, 80.0);
}

TEST(Scenarios, ShippedFileMatchesBuiltinLists) {
  const auto loaded = ScenarioTaxonomy::load(DEPTHKIT_TEST_CONFIG_DIR "/scenarios.toml");
  EXPECT_EQ(loaded, ScenarioTaxonomy::builtin());
  for (Scenario s : kAllScenarios) {
    EXPECT_FALSE(loaded.keywords_for(s).empty());
    EXPECT_EQ(scenario_from_string(to_string(s)), s);
  }
}
