#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "depthkit/annotation.hpp"
#include "depthkit/benchmark.hpp"
#include "depthkit/depthio.hpp"
#include "support/run_cli.hpp"
#include "support/test_util.hpp"

using namespace depthkit;
using namespace depthkit::testing_util;
namespace fs = std::filesystem;

TEST(Cli, HelpListsEverySubcommand) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.exit_code, 0);
  for (const char* sub : {"eval", "curate", "build-benchmark", "score-pairs", "serve-annotation", "synth-gen", "table"}) {
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).exit_code, 2);
  EXPECT_EQ(run_cli({"eval", "--alignment", "median"}).exit_code, 2);
  EXPECT_EQ(run_cli({"eval", "--gt", "x.jsonl"}).exit_code, 2);
  TempDir dir("cli_cfg");
  std::ofstream(dir / "bad.toml") << "[curation]\nn = 1.5\n";
  const auto r = run_cli({"curate", "--config", (dir / "bad.toml").string(), "--pred", "a", "--gt", "b", "--out", dir.path().string()});
  EXPECT_EQ(r.exit_code, 2) << r.output;
}

TEST(Cli, MissingGroundTruthExitsThreeNamingPath) {
  TempDir dir("cli_missing");
  const auto r0 = run_cli({"synth-gen", "--out", dir.path().string(), "--images", "1"});
  ASSERT_EQ(r0.exit_code, 0) << r0.output;
  fs::remove(dir / "gt" / "synth_0000.dbf");
  const auto r = run_cli({"eval", "--pred", (dir / "models/identity.jsonl").string(), "--gt",
                          (dir / "gt.jsonl").string()});
  EXPECT_EQ(r.exit_code, 3) << r.output;
  EXPECT_NE(r.output.find("synth_0000.dbf"), std::string::npos) << r.output;

  const auto r2 = run_cli({"eval", "--pred", (dir / "models/identity.jsonl").string(), "--gt",
                           (dir / "nope.jsonl").string()});
  EXPECT_EQ(r2.exit_code, 3);
  EXPECT_NE(r2.output.find("nope.jsonl"), std::string::npos) << r2.output;
}

TEST(Cli, IdenticalManifestsAndProtocolLine) {
  TempDir dir("cli_eval");
  ASSERT_EQ(run_cli({"synth-gen", "--out", dir.path().string(), "--images", "2"}).exit_code, 0);
  const std::string gt = (dir / "gt.jsonl").string();
  const auto lsq = run_cli({"eval", "--pred", gt, "--gt", gt, "--out", (dir / "e1").string()});
  ASSERT_EQ(lsq.exit_code, 0) << lsq.output;
  const auto report = nlohmann::json::parse(slurp(dir / "e1" / "report.json"));
  EXPECT_NEAR(report["mean"]["abs_rel"].get<double>(), 0.0, 1e-6);
  EXPECT_DOUBLE_EQ(report["mean"]["delta1"].get<double>(), 1.0);
  const auto robust = run_cli({"eval", "--pred", gt, "--gt", gt, "--alignment", "robust"});
  ASSERT_EQ(robust.exit_code, 0) << robust.output;
  const auto line = [](const std::string& s) { return s.substr(0, s.find('\n')); };
  EXPECT_NE(line(lsq.output), line(robust.output));
  EXPECT_NE(line(robust.output).find("robust"), std::string::npos);

  const auto table = run_cli({"table", "--in", (dir / "e1" / "report.json").string()});
  EXPECT_EQ(table.exit_code, 0);
  EXPECT_EQ(table.output, lsq.output);
}

TEST(Cli, PipelineScoresIdentityPerfectly) {
  TempDir dir("cli_pipe");
  for (const auto& r : run_pipeline(dir.path(), "2")) ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto acc = nlohmann::json::parse(slurp(dir / "score" / "accuracy.json"));
  ASSERT_EQ(acc.size(), 4u);
  EXPECT_EQ(acc[0]["model"], "identity");
  EXPECT_GT(acc[0]["labeled"].get<int>(), 0);
  EXPECT_DOUBLE_EQ(acc[0]["mean_accuracy"].get<double>(), 1.0);
  EXPECT_NE(slurp(dir / "bench" / "summary.txt").find("6 images / "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "curate" / "curated.jsonl"));
}

TEST(Cli, PipelineIsDeterministicAcrossRunsAndThreads) {
  TempDir a("cli_det_a"), b("cli_det_b"), c("cli_det_c");
  for (const auto& r : run_pipeline(a.path(), "1")) ASSERT_EQ(r.exit_code, 0) << r.output;
  for (const auto& r : run_pipeline(b.path(), "1")) ASSERT_EQ(r.exit_code, 0) << r.output;
  for (const auto& r : run_pipeline(c.path(), "4")) ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto ta = tree_contents(a.path());
  EXPECT_GT(ta.size(), 20u);
  EXPECT_TRUE(ta == tree_contents(b.path()));
  EXPECT_TRUE(ta == tree_contents(c.path()));
}

TEST(Cli, ShippedConfigsLoad) {
  TempDir dir("cli_configs");
  ASSERT_EQ(run_cli({"synth-gen", "--out", dir.path().string(), "--images", "1"}).exit_code, 0);
  const fs::path cfg = DEPTHKIT_TEST_CONFIG_DIR;
  for (const char* name : {"default.toml", "profiles/street.toml", "profiles/indoor.toml"}) {
    const auto r = run_cli({"eval", "--config", (cfg / name).string(), "--pred",
                            (dir / "models/identity.jsonl").string(), "--gt", (dir / "gt.jsonl").string(),
                            "--allow-skips"});
    EXPECT_EQ(r.exit_code, 0) << name << "\n" << r.output;
  }
  const auto street = run_cli({"eval", "--config", (cfg / "profiles/street.toml").string(), "--pred",
                               (dir / "models/identity.jsonl").string(), "--gt", (dir / "gt.jsonl").string()});
  EXPECT_NE(street.output.find("80"), std::string::npos);
  const auto scene = run_cli({"synth-gen", "--out", (dir / "scene").string(), "--scene",
                              (cfg / "scenes/tabletop.toml").string(), "--images", "1"});
  EXPECT_EQ(scene.exit_code, 0) << scene.output;
}

TEST(Cli, AnnotationLogLabelsQueuedPairs) {
  TempDir dir("cli_annot");
  const std::string synth = (dir / "synth").string(), bench = (dir / "bench").string();
  ASSERT_EQ(run_cli({"synth-gen", "--out", synth, "--images", "2", "--model", "identity", "--model",
                     "monotone(2)", "--model", "affine(2,3)", "--model", "inverted"})
                .exit_code,
            0);
  std::vector<std::string> preds;
  for (const char* m : {"identity", "monotone_2", "affine_2_3", "inverted"}) {
    preds.push_back("--pred");
    preds.push_back(synth + "/models/" + m + ".jsonl");
  }
  std::vector<std::string> b{"build-benchmark", "--keypoints", synth + "/keypoints.jsonl", "--out", bench,
                             "--ratio-threshold", "1.5"};
  b.insert(b.end(), preds.begin(), preds.end());
  ASSERT_EQ(run_cli(b).exit_code, 0);
  const auto queue = load_benchmark(fs::path(bench) / "queue.jsonl");
  ASSERT_FALSE(queue.empty());

  std::vector<std::string> score{"score-pairs", "--benchmark", bench + "/benchmark.jsonl", "--out",
                                 (dir / "score").string(), "--pred", synth + "/models/identity.jsonl"};
  const auto unlabeled = run_cli(score);
  EXPECT_EQ(unlabeled.exit_code, 3);
  EXPECT_NE(unlabeled.output.find("UnlabeledPair"), std::string::npos) << unlabeled.output;

  // three annotators agree on the first queued pair using the true ordering
  {
    ServiceOptions opts;
    opts.log_path = dir / "events.jsonl";
    AnnotationService svc(opts);
    svc.enqueue(queue);
    const DepthMap gt = load_depth(fs::path(synth) / "gt" / (queue[0].image_id + ".dbf"), DepthFormat::RawF32,
                                   DepthKind::MetricMeters);
    const bool first = gt.at(queue[0].p1.x, queue[0].p1.y) < gt.at(queue[0].p2.x, queue[0].p2.y);
    for (const char* who : {"a", "b", "c"}) {
      svc.register_annotator(who);
      auto claim = svc.claim_next(who);
      ASSERT_TRUE(claim);
      ASSERT_EQ(claim->pair.pair_id, queue[0].pair_id);
      svc.submit(who, claim->pair.pair_id, first ? Decision::FirstCloser : Decision::SecondCloser);
    }
  }
  score.push_back("--annotation-log");
  score.push_back((dir / "events.jsonl").string());
  score.push_back("--exclude-unlabeled");
  const auto r = run_cli(score);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto acc = nlohmann::json::parse(slurp(dir / "score" / "accuracy.json"));
  const auto all = load_benchmark(fs::path(bench) / "benchmark.jsonl");
  const std::size_t auto_labeled = all.size() - queue.size();
  EXPECT_EQ(acc[0]["labeled"].get<std::size_t>(), auto_labeled + 1);
}
