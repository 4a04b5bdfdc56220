#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthkit/depth_map.hpp"
#include "depthkit/manifest.hpp"
#include "depthkit/scenarios.hpp"

namespace depthkit {

enum class PairOrigin { AutoSampled, ManualChallenge };
enum class PairLabel { FirstCloser, SecondCloser, Unlabeled, Skipped };
enum class LabelSource { ModelConsensus, HumanConsensus, None };

std::string_view to_string(PairOrigin v);
std::string_view to_string(PairLabel v);
std::string_view to_string(LabelSource v);
PairOrigin pair_origin_from_string(std::string_view s);
PairLabel pair_label_from_string(std::string_view s);
LabelSource label_source_from_string(std::string_view s);

/// One ordinal question: which of two pixels is closer to the camera.
struct PointPair {
  std::string pair_id;
  std::string image_id;
  Pixel p1;
  Pixel p2;
  Scenario scenario = Scenario::Indoor;
  PairOrigin origin = PairOrigin::AutoSampled;
  PairLabel label = PairLabel::Unlabeled;
  LabelSource label_source = LabelSource::None;

  /// Throws InvalidArgument when p1 == p2, or when a label has no source.
  void validate() const;
  void validate_bounds(int width, int height) const;

  friend bool operator==(const PointPair&, const PointPair&) = default;
};

nlohmann::json to_json(const PointPair& p);
PointPair pair_from_json(const nlohmann::json& j);

using BenchmarkManifest = std::vector<PointPair>;

BenchmarkManifest load_benchmark(const std::filesystem::path& path);
std::string benchmark_to_jsonl(std::span<const PointPair> pairs);
void save_benchmark(std::span<const PointPair> pairs, const std::filesystem::path& path);

// ------------------------------------------------------------ sampling

struct Keypoint {
  Pixel at;
  int mask_id = 0;
};

/// Prompt keypoints of one image's segmentation masks.
struct ImageKeypoints {
  std::string image_id;
  int width = 0;
  int height = 0;
  Scenario scenario = Scenario::Indoor;
  std::vector<Keypoint> keypoints;
};

/// JSONL: {"image_id", "width", "height", "scenario", "keypoints": [[x, y, mask_id], ...]}
std::vector<ImageKeypoints> load_keypoints(const std::filesystem::path& path);
void save_keypoints(std::span<const ImageKeypoints> images, const std::filesystem::path& path);

struct SampleResult {
  std::vector<PointPair> pairs;
  /// Images without two keypoints on distinct masks.
  std::vector<std::string> skipped_images;
};

/// Draws up to `per_image_pairs` distinct keypoint pairs per image, each pair
/// spanning two different masks, uniformly without replacement. Fully
/// determined by `seed`.
SampleResult sample_pairs(std::span<const ImageKeypoints> images, std::uint64_t seed,
                          std::size_t per_image_pairs);

// ------------------------------------------------------------ voting

struct VotingConfig {
  double ratio_threshold = 3.0;
  std::size_t min_models = 4;

  void validate() const;
};

enum class ModelCall { FirstCloser, SecondCloser, Ineligible };
enum class VoteOutcome { ConsensusLabel, Disagreement, IneligibleAllModels };

std::string_view to_string(ModelCall v);
std::string_view to_string(VoteOutcome v);

struct ModelVote {
  std::string model_tag;
  double ratio = 1.0; // max(d1/d2, d2/d1) in depth units
  ModelCall call = ModelCall::Ineligible;
};

struct VoteResult {
  std::string pair_id;
  std::vector<ModelVote> per_model;
  VoteOutcome outcome = VoteOutcome::IneligibleAllModels;
  PairLabel consensus = PairLabel::Unlabeled; // set for ConsensusLabel

  friend bool operator==(const VoteResult&, const VoteResult&) = default;
};

struct ModelView {
  std::string tag;
  const DepthMap* map = nullptr;
};

inline bool operator==(const ModelVote& a, const ModelVote& b) {
  return a.model_tag == b.model_tag && a.ratio == b.ratio && a.call == b.call;
}

/// A model votes only when its depth ratio between the two pixels exceeds
/// the threshold; consensus needs at least one voter and unanimity.
VoteResult vote(const PointPair& pair, std::span<const ModelView> models, const VotingConfig& cfg);

nlohmann::json to_json(const VoteResult& v);

// ------------------------------------------------------------ build

/// All of one model's predictions, keyed by image_id.
struct ModelPredictions {
  std::string tag;
  std::map<std::string, DepthMap, std::less<>> maps;
};

ModelPredictions load_model_predictions(const PredictionManifest& manifest, int threads = 1);

struct BenchmarkBuild {
  BenchmarkManifest pairs;            // auto-labeled + queued
  std::vector<PointPair> queue;       // awaiting human annotation
  std::vector<VoteResult> votes;      // one per sampled pair
  std::vector<std::string> dropped;   // pair ids no model could vote on
  std::vector<std::string> skipped_images;
  std::size_t auto_labeled = 0;
  std::size_t disagreements = 0;
  std::size_t manual = 0;

  /// "<images> images / <pairs> pairs" line plus the per-route breakdown.
  std::string summary() const;
};

BenchmarkBuild build_benchmark(std::span<const ImageKeypoints> images,
                               std::span<const ModelPredictions> models,
                               std::span<const PointPair> manual_pairs, const VotingConfig& cfg,
                               std::uint64_t seed, std::size_t per_image_pairs, int threads = 1);

/// 999 -> "999", 1000 -> "1K", 1530 -> "1.5K", 2000000 -> "2M".
std::string abbreviate_count(std::size_t n);

// ------------------------------------------------------------ scoring

struct ScenarioScore {
  std::size_t correct = 0;
  std::size_t labeled = 0;
  double accuracy() const { return labeled ? double(correct) / double(labeled) : 0.0; }
};

struct AccuracyReport {
  std::string model_tag;
  std::array<ScenarioScore, kScenarioCount> per_scenario{};
  ScenarioScore overall;
  std::size_t skipped = 0;

  double mean() const { return overall.accuracy(); }
};

/// A labeled pair is correct iff the model puts the labeled-closer pixel
/// strictly closer. Skipped pairs are excluded; Unlabeled pairs raise
/// UnlabeledPair. Missing or invalid predictions count as incorrect.
AccuracyReport pair_accuracy(const ModelPredictions& model, std::span<const PointPair> benchmark);

nlohmann::json to_json(const AccuracyReport& r);
AccuracyReport accuracy_from_json(const nlohmann::json& j);
/// One row per model, one column per scenario plus the mean.
std::string format_accuracy_table(std::span<const AccuracyReport> reports);

} // namespace depthkit
