#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "depthkit/annotation.hpp"
#include "depthkit/annotation_http.hpp"
#include "depthkit/benchmark.hpp"
#include "depthkit/curation.hpp"
#include "depthkit/depthio.hpp"
#include "depthkit/error.hpp"
#include "depthkit/losses.hpp"
#include "depthkit/manifest.hpp"
#include "depthkit/metrics.hpp"
#include "depthkit/parallel.hpp"
#include "depthkit/random.hpp"
#include "depthkit/synthgen.hpp"
#include "depthkit/toml_lite.hpp"

namespace fs = std::filesystem;
using namespace depthkit;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kInternal = 4 };

/// Raised for anything wrong with flags or config files.
struct ConfigFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  fs::path config;
  fs::path pred, pred_b, gt, out;
  std::vector<fs::path> preds;
  std::string alignment, space;
  std::optional<double> ratio_threshold, n_fraction;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool allow_skips = false;

  EvalConfig eval;
  LossConfig loss;
  CurationConfig curation;
  VotingConfig voting;
  std::size_t pairs_per_image = 20;
  std::uint64_t run_seed = 0;
  int run_threads = 1;
};

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void load_config(RunConfig& rc) {
  if (!rc.config.empty()) {
    if (!fs::exists(rc.config)) throw ConfigFailure("config file not found: " + rc.config.string());
    const toml::Table root = toml::parse_file(rc.config);
    if (const auto* t = root.table("eval")) rc.eval.update_from(*t);
    if (const auto* t = root.table("loss")) rc.loss.update_from(*t);
    if (const auto* t = root.table("curation")) {
      if (auto n = t->number("n")) rc.curation.n = *n;
      if (auto k = t->string("loss")) {
        if (*k == "ssi") rc.curation.loss_kind = CurationLoss::SsiResidual;
        else if (*k == "absdiff") rc.curation.loss_kind = CurationLoss::AbsDiff;
        else throw Error(ErrorCode::ConfigError, "[curation] loss must be \"ssi\" or \"absdiff\"");
      }
    }
    if (const auto* t = root.table("voting")) {
      if (auto r = t->number("ratio_threshold")) rc.voting.ratio_threshold = *r;
      if (auto m = t->integer("min_models")) {
        if (*m < 1) throw Error(ErrorCode::ConfigError, "[voting] min_models must be >= 1");
        rc.voting.min_models = std::size_t(*m);
      }
      if (auto p = t->integer("pairs_per_image")) {
        if (*p < 1) throw Error(ErrorCode::ConfigError, "[voting] pairs_per_image must be >= 1");
        rc.pairs_per_image = std::size_t(*p);
      }
    }
    if (const auto* t = root.table("run")) {
      if (auto s = t->integer("seed")) rc.run_seed = std::uint64_t(*s);
      if (auto n = t->integer("threads")) rc.run_threads = int(*n);
    }
  }
  if (!rc.alignment.empty()) {
    rc.eval.alignment = rc.alignment == "robust" ? AlignmentMethod::Robust : AlignmentMethod::LeastSquares;
  }
  if (!rc.space.empty()) rc.eval.space = rc.space == "depth" ? AlignSpace::Depth : AlignSpace::InverseDepth;
  if (rc.ratio_threshold) rc.voting.ratio_threshold = *rc.ratio_threshold;
  if (rc.n_fraction) rc.curation.n = *rc.n_fraction;
  if (rc.seed) rc.run_seed = *rc.seed;
  if (rc.threads) rc.run_threads = *rc.threads;
  if (rc.run_threads < 1) throw ConfigFailure("--threads must be >= 1");
  rc.eval.validate();
  rc.loss.validate();
  rc.curation.validate();
  rc.voting.validate();
}

void require(const fs::path& p, const char* flag) {
  if (p.empty()) throw ConfigFailure(std::string(flag) + " is required");
}

void emit(const RunConfig& rc, const std::string& name, const std::string& text) {
  if (!rc.out.empty()) write_text_file(rc.out / name, text);
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

int cmd_eval(const RunConfig& rc) {
  require(rc.pred, "--pred");
  require(rc.gt, "--gt");
  const auto gt = load_manifest(rc.gt, DatasetRole::GroundTruth);
  const auto pred = load_manifest(rc.pred);
  std::size_t skipped = 0;
  if (!rc.pred_b.empty()) {
    const auto pred_b = load_manifest(rc.pred_b);
    const auto cmp = compare_label_sources(pred, pred_b, gt, rc.eval, rc.run_threads);
    const std::string table = format_comparison_table(cmp);
    emit(rc, "comparison.json", json_text(to_json(cmp)));
    emit(rc, "comparison.txt", table);
    std::cout << table;
    skipped = cmp.a.images_skipped + cmp.b.images_skipped;
  } else {
    const auto report = evaluate_dataset(pred, gt, rc.eval, rc.run_threads);
    const std::string table = format_metric_table(std::span(&report, 1));
    emit(rc, "report.json", json_text(to_json(report)));
    emit(rc, "report.txt", table);
    std::cout << table;
    skipped = report.images_skipped;
    for (const auto& s : report.skipped) std::cerr << "skipped " << s.image_id << ": " << s.reason << '\n';
  }
  if (skipped > 0 && !rc.allow_skips) {
    std::cerr << "error: " << skipped << " image(s) skipped (pass --allow-skips to accept)\n";
    return kData;
  }
  return kOk;
}

int cmd_curate(const RunConfig& rc) {
  require(rc.pred, "--pred");
  require(rc.gt, "--gt");
  require(rc.out, "--out");
  const auto teacher = load_manifest(rc.pred, DatasetRole::PseudoLabeledReal);
  const auto counterpart = load_manifest(rc.gt);
  const auto result = curate_dataset(teacher, counterpart, rc.curation, rc.out, rc.run_threads);
  save_manifest(result.manifest, rc.out / "curated.jsonl");
  write_text_file(rc.out / "curation_report.jsonl", report_to_jsonl(result.reports));
  std::size_t masked = 0, valid = 0;
  for (const auto& r : result.reports) {
    masked += r.pixels_masked;
    valid += r.pixels_valid_before;
  }
  std::cout << result.reports.size() << " images curated, " << masked << " of " << valid
            << " valid pixels masked\n";
  return kOk;
}

std::vector<ModelPredictions> load_models(const RunConfig& rc) {
  std::vector<ModelPredictions> models;
  for (const auto& p : rc.preds) models.push_back(load_model_predictions(load_manifest(p), rc.run_threads));
  return models;
}

int cmd_build_benchmark(const RunConfig& rc, const fs::path& keypoints, const fs::path& manual) {
  require(keypoints, "--keypoints");
  require(rc.out, "--out");
  if (rc.preds.empty()) throw ConfigFailure("--pred is required (one per model)");
  const auto images = load_keypoints(keypoints);
  const auto models = load_models(rc);
  BenchmarkManifest manual_pairs;
  if (!manual.empty()) manual_pairs = load_benchmark(manual);
  const auto build = build_benchmark(images, models, manual_pairs, rc.voting, rc.run_seed,
                                     rc.pairs_per_image, rc.run_threads);
  save_benchmark(build.pairs, rc.out / "benchmark.jsonl");
  save_benchmark(build.queue, rc.out / "queue.jsonl");
  std::string votes;
  for (const auto& v : build.votes) votes += to_json(v).dump() + "\n";
  write_text_file(rc.out / "votes.jsonl", votes);
  write_text_file(rc.out / "summary.txt", build.summary());
  std::cout << build.summary();
  return kOk;
}

int cmd_score(const RunConfig& rc, const fs::path& benchmark, const fs::path& log,
              bool exclude_unlabeled) {
  require(benchmark, "--benchmark");
  if (rc.preds.empty()) throw ConfigFailure("--pred is required (one per model)");
  BenchmarkManifest pairs = load_benchmark(benchmark);
  if (!log.empty()) {
    const std::size_t changed = apply_annotations(pairs, replay(load_event_log(log)));
    std::cerr << changed << " pair(s) labeled from the annotation log\n";
  }
  if (exclude_unlabeled) {
    const auto before = pairs.size();
    std::erase_if(pairs, [](const PointPair& p) { return p.label == PairLabel::Unlabeled; });
    if (pairs.size() != before) std::cerr << before - pairs.size() << " unlabeled pair(s) excluded\n";
  }
  std::vector<AccuracyReport> reports;
  json out = json::array();
  for (const auto& model : load_models(rc)) {
    reports.push_back(pair_accuracy(model, pairs));
    out.push_back(to_json(reports.back()));
  }
  const std::string table = format_accuracy_table(reports);
  emit(rc, "accuracy.json", json_text(out));
  emit(rc, "accuracy.txt", table);
  std::cout << table;
  return kOk;
}

struct ServeArgs {
  fs::path queue, log, snapshot, images, static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  double lease_minutes = 10;
};

int cmd_serve(const ServeArgs& a) {
  if (a.log.empty()) throw ConfigFailure("--log is required");
  if (a.lease_minutes <= 0) throw ConfigFailure("--lease-minutes must be positive");
  ServiceOptions opts;
  opts.log_path = a.log;
  opts.lease_ms = std::int64_t(a.lease_minutes * 60'000.0);
  std::unique_ptr<AnnotationService> service =
      a.snapshot.empty() ? std::make_unique<AnnotationService>(opts)
                         : std::make_unique<AnnotationService>(a.snapshot, opts);
  if (!a.queue.empty()) {
    std::vector<PointPair> fresh;
    for (auto& p : load_benchmark(a.queue)) {
      if (!service->find_pair(p.pair_id)) fresh.push_back(std::move(p));
    }
    service->enqueue(fresh);
    std::cerr << fresh.size() << " pair(s) enqueued\n";
  }
  ServerOptions sopts;
  if (!a.images.empty()) {
    for (const auto& e : load_manifest(a.images).entries) sopts.images.emplace(e.image_id, e.image);
  }
  if (!a.static_dir.empty()) sopts.static_dir = a.static_dir;
  AnnotationServer server(*service, sopts);
  const int port = server.bind(a.host, a.port);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start();
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  if (!a.snapshot.empty()) service->save_snapshot(a.snapshot);
  std::cerr << "stopped\n";
  return kOk;
}

struct SynthArgs {
  std::size_t images = 4;
  int width = 64, height = 48;
  std::size_t keypoints_per_mask = 6;
  fs::path scene;
  std::vector<std::string> models{"identity", "monotone(2)", "affine(2,3)", "monotone(0.5)"};
};

std::string model_tag(const std::string& spec) {
  std::string tag;
  for (char c : spec) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.') tag += c;
    else if (!tag.empty() && tag.back() != '_') tag += '_';
  }
  while (!tag.empty() && tag.back() == '_') tag.pop_back();
  return tag;
}

int cmd_synth(const RunConfig& rc, const SynthArgs& a) {
  require(rc.out, "--out");
  if (a.images == 0) throw ConfigFailure("--images must be >= 1");
  std::vector<synth::FakeModel> fakes;
  for (const auto& m : a.models) fakes.push_back(synth::FakeModel::parse(m));
  std::optional<synth::SceneSpec> fixed;
  if (!a.scene.empty()) fixed = synth::load_scene(a.scene);

  std::vector<synth::Render> renders(a.images);
  parallel_for(a.images, rc.run_threads, [&](std::size_t i) {
    const std::uint64_t s = splitmix64(rc.run_seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));
    renders[i] = synth::render(fixed ? *fixed : synth::random_scene(s, a.width, a.height));
  });

  const fs::path out = rc.out;
  PredictionManifest gt;
  gt.source_tag = "synthetic_gt";
  gt.role = DatasetRole::GroundTruth;
  gt.kind = DepthKind::MetricMeters;
  std::vector<PredictionManifest> model_manifests(fakes.size());
  std::vector<ImageKeypoints> keypoints;
  for (std::size_t i = 0; i < a.images; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", i);
    const synth::Render& r = renders[i];
    const fs::path image = out / "images" / (std::string(id) + ".png");
    const fs::path depth = out / "gt" / (std::string(id) + ".dbf");
    save_rgb_png(r.depth.width, r.depth.height, r.rgb, image);
    save_depth(r.depth, depth, DepthFormat::RawF32);
    gt.entries.push_back({id, image, depth, std::nullopt});
    for (std::size_t k = 0; k < fakes.size(); ++k) {
      const std::string tag = model_tag(a.models[k]);
      const DepthMap pred = synth::fake_model(r.depth, fakes[k]);
      const fs::path path = out / "models" / tag / (std::string(id) + ".pfm");
      save_depth(pred, path, DepthFormat::PFM);
      auto& m = model_manifests[k];
      m.source_tag = tag;
      m.kind = pred.kind;
      m.entries.push_back({id, image, path, std::nullopt});
    }
    const std::uint64_t kseed = splitmix64(rc.run_seed + 0x51ull * (i + 1));
    keypoints.push_back({id, r.depth.width, r.depth.height, kAllScenarios[i % kScenarioCount],
                         synth::sample_keypoints(r, a.keypoints_per_mask, kseed)});
  }
  save_manifest(gt, out / "gt.jsonl");
  for (const auto& m : model_manifests) save_manifest(m, out / "models" / (m.source_tag + ".jsonl"));
  save_keypoints(keypoints, out / "keypoints.jsonl");
  std::cout << a.images << " scene(s), " << fakes.size() << " model(s) written to " << out.string() << '\n';
  return kOk;
}

int cmd_table(const std::vector<fs::path>& inputs) {
  if (inputs.empty()) throw ConfigFailure("--in is required");
  std::vector<MetricReport> metrics;
  std::vector<AccuracyReport> accuracy;
  for (const auto& path : inputs) {
    const auto bytes = read_file(path);
    json j;
    try {
      j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedHeader, path.string() + ": " + e.what());
    }
    const auto add = [&](const json& item) {
      if (item.contains("protocol")) metrics.push_back(report_from_json(item));
      else if (item.contains("model")) accuracy.push_back(accuracy_from_json(item));
      else if (item.contains("a") && item.contains("b")) {
        metrics.push_back(report_from_json(item["a"]));
        metrics.push_back(report_from_json(item["b"]));
      } else {
        throw Error(ErrorCode::MalformedHeader, path.string() + ": not a metric or accuracy report");
      }
    };
    if (j.is_array()) {
      for (const auto& item : j) add(item);
    } else {
      add(j);
    }
  }
  if (!metrics.empty()) std::cout << format_metric_table(metrics);
  if (!accuracy.empty()) std::cout << format_accuracy_table(accuracy);
  return kOk;
}

void add_common(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--config", rc.config, "TOML config file; flags override its values");
  cmd->add_option("--out", rc.out, "Output directory");
  cmd->add_option("--seed", rc.seed, "Random seed");
  cmd->add_option("--threads", rc.threads, "Worker threads");
}

void add_eval_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--alignment", rc.alignment, "Scale/shift fit")->check(CLI::IsMember({"lsq", "robust"}));
  cmd->add_option("--space", rc.space, "Alignment space")->check(CLI::IsMember({"inv", "depth"}));
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"depthkit: relative depth evaluation, curation and pair benchmark toolkit"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "depthkit 0.3.0");
  RunConfig rc;

  auto* eval = app.add_subcommand("eval", "Align predictions to ground truth and report depth metrics");
  add_common(eval, rc);
  add_eval_flags(eval, rc);
  eval->add_option("--pred", rc.pred, "Prediction manifest");
  eval->add_option("--pred-b", rc.pred_b, "Second prediction manifest to compare against --pred");
  eval->add_option("--gt", rc.gt, "Ground-truth manifest");
  eval->add_flag("--allow-skips", rc.allow_skips, "Exit 0 even when images were skipped");

  auto* curate = app.add_subcommand("curate", "Mask the highest-loss pixels of pseudo labels");
  add_common(curate, rc);
  curate->add_option("--pred", rc.pred, "Teacher (pseudo label) manifest");
  curate->add_option("--gt", rc.gt, "Counterpart manifest the loss is measured against");
  curate->add_option("--n-fraction", rc.n_fraction, "Fraction of valid pixels to mask");

  fs::path keypoints, manual;
  auto* bench = app.add_subcommand("build-benchmark", "Sample point pairs and label them by model voting");
  add_common(bench, rc);
  bench->add_option("--pred", rc.preds, "Model prediction manifest (repeat once per model)");
  bench->add_option("--keypoints", keypoints, "Mask keypoints JSONL");
  bench->add_option("--manual", manual, "Manually sampled challenge pairs JSONL");
  bench->add_option("--ratio-threshold", rc.ratio_threshold, "Depth ratio a model must exceed to vote");
  bench->add_option("--pairs-per-image", rc.pairs_per_image, "Pairs sampled per image");

  fs::path benchmark, annotation_log;
  bool exclude_unlabeled = false;
  auto* score = app.add_subcommand("score-pairs", "Score models on a labeled pair benchmark");
  add_common(score, rc);
  score->add_option("--pred", rc.preds, "Model prediction manifest (repeat once per model)");
  score->add_option("--benchmark", benchmark, "Benchmark JSONL");
  score->add_option("--annotation-log", annotation_log, "Annotation event log to apply first");
  score->add_flag("--exclude-unlabeled", exclude_unlabeled, "Drop pairs still awaiting annotation");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve-annotation", "Run the annotation HTTP service until interrupted");
  serve->add_option("--queue", serve_args.queue, "Pairs to enqueue (JSONL)");
  serve->add_option("--log", serve_args.log, "Append-only event log");
  serve->add_option("--snapshot", serve_args.snapshot, "State snapshot to restore from and save on exit");
  serve->add_option("--images", serve_args.images, "Manifest mapping image ids to RGB images");
  serve->add_option("--static", serve_args.static_dir, "Front-end directory served at /");
  serve->add_option("--host", serve_args.host, "Bind address");
  serve->add_option("--port", serve_args.port, "Port (0 picks a free one)");
  serve->add_option("--lease-minutes", serve_args.lease_minutes, "Claim lease duration");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth-gen", "Render synthetic scenes, fake model outputs and keypoints");
  add_common(synth, rc);
  synth->add_option("--images", synth_args.images, "Number of scenes");
  synth->add_option("--width", synth_args.width, "Image width");
  synth->add_option("--height", synth_args.height, "Image height");
  synth->add_option("--scene", synth_args.scene, "Scene TOML used for every image");
  synth->add_option("--model", synth_args.models, "Fake model spec, e.g. affine(2,3) (repeatable)");
  synth->add_option("--keypoints-per-mask", synth_args.keypoints_per_mask, "Keypoints sampled per mask");

  std::vector<fs::path> table_inputs;
  auto* table = app.add_subcommand("table", "Render saved JSON reports as text tables");
  table->add_option("--in", table_inputs, "Report JSON (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  bool configured = false;
  try {
    if (!serve->parsed() && !table->parsed()) load_config(rc);
    configured = true;
    if (eval->parsed()) return cmd_eval(rc);
    if (curate->parsed()) return cmd_curate(rc);
    if (bench->parsed()) return cmd_build_benchmark(rc, keypoints, manual);
    if (score->parsed()) return cmd_score(rc, benchmark, annotation_log, exclude_unlabeled);
    if (serve->parsed()) return cmd_serve(serve_args);
    if (synth->parsed()) return cmd_synth(rc, synth_args);
    if (table->parsed()) return cmd_table(table_inputs);
  } catch (const ConfigFailure& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigError || !configured ? kConfig : kData;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
