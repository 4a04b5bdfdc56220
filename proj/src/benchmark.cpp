#include "depthkit/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "depthkit/depthio.hpp"
#include "depthkit/error.hpp"
#include "depthkit/parallel.hpp"
#include "depthkit/random.hpp"

namespace depthkit {

using nlohmann::json;

std::string_view to_string(PairOrigin v) {
  return v == PairOrigin::AutoSampled ? "auto_sampled" : "manual_challenge";
}

std::string_view to_string(PairLabel v) {
  switch (v) {
  case PairLabel::FirstCloser: return "first_closer";
  case PairLabel::SecondCloser: return "second_closer";
  case PairLabel::Unlabeled: return "unlabeled";
  case PairLabel::Skipped: return "skipped";
  }
  return "?";
}

std::string_view to_string(LabelSource v) {
  switch (v) {
  case LabelSource::ModelConsensus: return "model_consensus";
  case LabelSource::HumanConsensus: return "human_consensus";
  case LabelSource::None: return "none";
  }
  return "?";
}

PairOrigin pair_origin_from_string(std::string_view s) {
  if (s == "auto_sampled") return PairOrigin::AutoSampled;
  if (s == "manual_challenge") return PairOrigin::ManualChallenge;
  throw Error(ErrorCode::InvalidArgument, "unknown pair origin '" + std::string(s) + "'");
}

PairLabel pair_label_from_string(std::string_view s) {
  if (s == "first_closer") return PairLabel::FirstCloser;
  if (s == "second_closer") return PairLabel::SecondCloser;
  if (s == "unlabeled") return PairLabel::Unlabeled;
  if (s == "skipped") return PairLabel::Skipped;
  throw Error(ErrorCode::InvalidArgument, "unknown pair label '" + std::string(s) + "'");
}

LabelSource label_source_from_string(std::string_view s) {
  if (s == "model_consensus") return LabelSource::ModelConsensus;
  if (s == "human_consensus") return LabelSource::HumanConsensus;
  if (s == "none") return LabelSource::None;
  throw Error(ErrorCode::InvalidArgument, "unknown label source '" + std::string(s) + "'");
}

std::string_view to_string(ModelCall v) {
  switch (v) {
  case ModelCall::FirstCloser: return "first_closer";
  case ModelCall::SecondCloser: return "second_closer";
  case ModelCall::Ineligible: return "ineligible";
  }
  return "?";
}

std::string_view to_string(VoteOutcome v) {
  switch (v) {
  case VoteOutcome::ConsensusLabel: return "consensus";
  case VoteOutcome::Disagreement: return "disagreement";
  case VoteOutcome::IneligibleAllModels: return "ineligible_all_models";
  }
  return "?";
}

void PointPair::validate() const {
  if (p1 == p2) {
    throw Error(ErrorCode::InvalidArgument, "pair '" + pair_id + "' uses the same pixel twice");
  }
  if (label != PairLabel::Unlabeled && label_source == LabelSource::None) {
    throw Error(ErrorCode::InvalidArgument, "pair '" + pair_id + "' is labeled without a source");
  }
}

void PointPair::validate_bounds(int width, int height) const {
  auto inside = [&](Pixel p) { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; };
  if (!inside(p1) || !inside(p2)) {
    throw Error(ErrorCode::InvalidPixel, "pair '" + pair_id + "' lies outside its " +
                                             std::to_string(width) + "x" +
                                             std::to_string(height) + " image");
  }
}

json to_json(const PointPair& p) {
  json j;
  j["pair_id"] = p.pair_id;
  j["image_id"] = p.image_id;
  j["p1"] = {p.p1.x, p.p1.y};
  j["p2"] = {p.p2.x, p.p2.y};
  j["scenario"] = to_string(p.scenario);
  j["origin"] = to_string(p.origin);
  j["label"] = to_string(p.label);
  j["label_source"] = to_string(p.label_source);
  return j;
}

namespace {

Pixel pixel_from_json(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw Error(ErrorCode::MalformedHeader, std::string("field '") + key + "' must be [x, y]");
  }
  return {v[0].get<int>(), v[1].get<int>()};
}

} // namespace

PointPair pair_from_json(const json& j) {
  try {
    PointPair p;
    p.pair_id = j.at("pair_id").get<std::string>();
    p.image_id = j.at("image_id").get<std::string>();
    p.p1 = pixel_from_json(j, "p1");
    p.p2 = pixel_from_json(j, "p2");
    p.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    p.origin = pair_origin_from_string(j.value("origin", "auto_sampled"));
    p.label = pair_label_from_string(j.value("label", "unlabeled"));
    p.label_source = label_source_from_string(j.value("label_source", "none"));
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("bad point pair record: ") + e.what());
  }
}

namespace {

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open '" + path.string() + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedHeader,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      fn(j);
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.detail(),
                  e.byte_offset());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedHeader,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

} // namespace

BenchmarkManifest load_benchmark(const std::filesystem::path& path) {
  BenchmarkManifest pairs;
  std::set<std::string, std::less<>> ids;
  for_each_json_line(path, [&](const json& j) {
    PointPair p = pair_from_json(j);
    if (!ids.insert(p.pair_id).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate pair_id '" + p.pair_id + "'");
    }
    pairs.push_back(std::move(p));
  });
  return pairs;
}

std::string benchmark_to_jsonl(std::span<const PointPair> pairs) {
  std::ostringstream out;
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
  return out.str();
}

void save_benchmark(std::span<const PointPair> pairs, const std::filesystem::path& path) {
  write_text_file(path, benchmark_to_jsonl(pairs));
}

std::vector<ImageKeypoints> load_keypoints(const std::filesystem::path& path) {
  std::vector<ImageKeypoints> out;
  for_each_json_line(path, [&](const json& j) {
    ImageKeypoints img;
    img.image_id = j.at("image_id").get<std::string>();
    img.width = j.at("width").get<int>();
    img.height = j.at("height").get<int>();
    img.scenario = scenario_from_string(j.value("scenario", "indoor"));
    for (const auto& k : j.at("keypoints")) {
      if (!k.is_array() || k.size() != 3) {
        throw Error(ErrorCode::MalformedHeader, "keypoints must be [x, y, mask_id]");
      }
      Keypoint kp{{k[0].get<int>(), k[1].get<int>()}, k[2].get<int>()};
      if (kp.at.x < 0 || kp.at.y < 0 || kp.at.x >= img.width || kp.at.y >= img.height) {
        throw Error(ErrorCode::InvalidPixel, "keypoint outside image '" + img.image_id + "'");
      }
      img.keypoints.push_back(kp);
    }
    out.push_back(std::move(img));
  });
  return out;
}

void save_keypoints(std::span<const ImageKeypoints> images, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& img : images) {
    json kps = json::array();
    for (const auto& k : img.keypoints) kps.push_back({k.at.x, k.at.y, k.mask_id});
    json j{{"image_id", img.image_id},
           {"width", img.width},
           {"height", img.height},
           {"scenario", to_string(img.scenario)},
           {"keypoints", std::move(kps)}};
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

SampleResult sample_pairs(std::span<const ImageKeypoints> images, std::uint64_t seed,
                          std::size_t per_image_pairs) {
  SampleResult result;
  std::mt19937_64 rng = seeded_rng(seed);
  for (const auto& img : images) {
    const auto& kps = img.keypoints;
    std::vector<std::pair<std::size_t, std::size_t>> eligible;
    for (std::size_t i = 0; i < kps.size(); ++i) {
      for (std::size_t j = i + 1; j < kps.size(); ++j) {
        if (kps[i].mask_id != kps[j].mask_id && !(kps[i].at == kps[j].at)) {
          eligible.emplace_back(i, j);
        }
      }
    }
    if (eligible.empty()) {
      result.skipped_images.push_back(img.image_id);
      continue;
    }
    const std::size_t take = std::min(per_image_pairs, eligible.size());
    // partial Fisher-Yates: the first `take` slots become a uniform sample
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t pick = k + std::size_t(uniform_below(rng, eligible.size() - k));
      std::swap(eligible[k], eligible[pick]);
      PointPair p;
      p.pair_id = img.image_id + "#" + std::to_string(k);
      p.image_id = img.image_id;
      p.p1 = kps[eligible[k].first].at;
      p.p2 = kps[eligible[k].second].at;
      p.scenario = img.scenario;
      p.origin = PairOrigin::AutoSampled;
      result.pairs.push_back(std::move(p));
    }
  }
  return result;
}

void VotingConfig::validate() const {
  if (!(ratio_threshold > 1.0) || !std::isfinite(ratio_threshold)) {
    throw Error(ErrorCode::ConfigError, "ratio_threshold must be > 1");
  }
  if (min_models < 1) {
    throw Error(ErrorCode::ConfigError, "min_models must be at least 1");
  }
}

VoteResult vote(const PointPair& pair, std::span<const ModelView> models, const VotingConfig& cfg) {
  cfg.validate();
  if (models.size() < cfg.min_models) {
    throw Error(ErrorCode::InvalidArgument, "vote needs " + std::to_string(cfg.min_models) +
                                                " models, got " + std::to_string(models.size()));
  }
  VoteResult result;
  result.pair_id = pair.pair_id;
  std::size_t first = 0, second = 0;
  for (const auto& m : models) {
    const DepthMap& map = *m.map;
    auto depth_at = [&](Pixel p, const char* which) {
      if (!map.contains(p) || !map.is_valid(p.x, p.y)) {
        throw Error(ErrorCode::InvalidPixel, "model '" + m.tag + "' has no valid value at " +
                                                 which + " (" + std::to_string(p.x) + ", " +
                                                 std::to_string(p.y) + ") of pair '" +
                                                 pair.pair_id + "'");
      }
      const double v = map.at(p.x, p.y);
      if (map.kind == DepthKind::InverseRelative) {
        if (!(v > 0.0)) {
          throw Error(ErrorCode::InvalidPixel, "model '" + m.tag + "' has non-positive inverse depth at " + which + " of pair '" + pair.pair_id + "'");
        }
        return 1.0 / v;
      }
      return v;
    };
    const double d1 = depth_at(pair.p1, "p1");
    const double d2 = depth_at(pair.p2, "p2");
    ModelVote mv;
    mv.model_tag = m.tag;
    mv.ratio = std::max(d1 / d2, d2 / d1);
    if (mv.ratio > cfg.ratio_threshold && d1 != d2) {
      mv.call = d1 < d2 ? ModelCall::FirstCloser : ModelCall::SecondCloser;
      (mv.call == ModelCall::FirstCloser ? first : second)++;
    }
    result.per_model.push_back(std::move(mv));
  }
  if (first + second == 0) {
    result.outcome = VoteOutcome::IneligibleAllModels;
  } else if (first == 0 || second == 0) {
    result.outcome = VoteOutcome::ConsensusLabel;
    result.consensus = first > 0 ? PairLabel::FirstCloser : PairLabel::SecondCloser;
  } else {
    result.outcome = VoteOutcome::Disagreement;
  }
  return result;
}

json to_json(const VoteResult& v) {
  json models = json::array();
  for (const auto& m : v.per_model) {
    models.push_back({{"model", m.model_tag}, {"ratio", m.ratio}, {"call", to_string(m.call)}});
  }
  json j{{"pair_id", v.pair_id}, {"outcome", to_string(v.outcome)}, {"models", std::move(models)}};
  if (v.outcome == VoteOutcome::ConsensusLabel) j["label"] = to_string(v.consensus);
  return j;
}

ModelPredictions load_model_predictions(const PredictionManifest& manifest, int threads) {
  std::vector<DepthMap> maps(manifest.entries.size());
  parallel_for(manifest.entries.size(), threads, [&](std::size_t i) {
    maps[i] = load_entry_depth(manifest, manifest.entries[i]);
  });
  ModelPredictions out;
  out.tag = manifest.source_tag;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    out.maps.emplace(manifest.entries[i].image_id, std::move(maps[i]));
  }
  return out;
}

std::string abbreviate_count(std::size_t n) {
  if (n < 1000) return std::to_string(n);
  const char* suffix = "K";
  double v = double(n) / 1000.0;
  if (n >= 1000000) {
    suffix = "M";
    v = double(n) / 1000000.0;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", std::floor(v * 10.0) / 10.0);
  std::string s = buf;
  if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.resize(s.size() - 2);
  return s + suffix;
}

std::string BenchmarkBuild::summary() const {
  std::set<std::string_view> image_ids;
  for (const auto& p : pairs) image_ids.insert(p.image_id);
  std::ostringstream out;
  out << abbreviate_count(image_ids.size()) << " images / " << abbreviate_count(pairs.size())
      << " pairs\n";
  out << "  images: " << image_ids.size() << " (skipped for too few keypoints: "
      << skipped_images.size() << ")\n";
  out << "  pairs: " << pairs.size() << " = auto-labeled " << auto_labeled << " + queued "
      << queue.size() << " (disagreement " << disagreements << ", manual " << manual << ")\n";
  out << "  dropped (no model above ratio threshold): " << dropped.size() << "\n";
  return out.str();
}

BenchmarkBuild build_benchmark(std::span<const ImageKeypoints> images,
                               std::span<const ModelPredictions> models,
                               std::span<const PointPair> manual_pairs, const VotingConfig& cfg,
                               std::uint64_t seed, std::size_t per_image_pairs, int threads) {
  cfg.validate();
  for (const auto& m : manual_pairs) {
    if (m.origin != PairOrigin::ManualChallenge) {
      throw Error(ErrorCode::InvalidArgument,
                  "manual pair '" + m.pair_id + "' must have origin manual_challenge");
    }
    m.validate();
  }
  SampleResult sampled = sample_pairs(images, seed, per_image_pairs);

  std::map<std::string_view, const ImageKeypoints*> image_index;
  for (const auto& img : images) image_index[img.image_id] = &img;

  BenchmarkBuild build;
  build.skipped_images = std::move(sampled.skipped_images);
  build.votes.resize(sampled.pairs.size());
  parallel_for(sampled.pairs.size(), threads, [&](std::size_t i) {
    const PointPair& pair = sampled.pairs[i];
    std::vector<ModelView> views;
    for (const auto& m : models) {
      auto it = m.maps.find(pair.image_id);
      if (it == m.maps.end()) {
        throw Error(ErrorCode::MissingCounterpart,
                    "model '" + m.tag + "' has no prediction for image '" + pair.image_id + "'");
      }
      views.push_back({m.tag, &it->second});
    }
    build.votes[i] = vote(pair, views, cfg);
  });

  std::set<std::string, std::less<>> ids;
  for (std::size_t i = 0; i < sampled.pairs.size(); ++i) {
    PointPair pair = sampled.pairs[i];
    const VoteResult& v = build.votes[i];
    ids.insert(pair.pair_id);
    switch (v.outcome) {
    case VoteOutcome::ConsensusLabel:
      pair.label = v.consensus;
      pair.label_source = LabelSource::ModelConsensus;
      build.pairs.push_back(std::move(pair));
      ++build.auto_labeled;
      break;
    case VoteOutcome::Disagreement:
      build.queue.push_back(pair);
      build.pairs.push_back(std::move(pair));
      ++build.disagreements;
      break;
    case VoteOutcome::IneligibleAllModels:
      build.dropped.push_back(pair.pair_id);
      break;
    }
  }
  for (PointPair pair : manual_pairs) {
    if (!ids.insert(pair.pair_id).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate pair_id '" + pair.pair_id + "'");
    }
    if (auto it = image_index.find(pair.image_id); it != image_index.end()) {
      pair.validate_bounds(it->second->width, it->second->height);
    }
    pair.label = PairLabel::Unlabeled;
    pair.label_source = LabelSource::None;
    build.queue.push_back(pair);
    build.pairs.push_back(std::move(pair));
    ++build.manual;
  }
  return build;
}

AccuracyReport pair_accuracy(const ModelPredictions& model, std::span<const PointPair> benchmark) {
  AccuracyReport report;
  report.model_tag = model.tag;
  for (const auto& pair : benchmark) {
    if (pair.label == PairLabel::Skipped) {
      ++report.skipped;
      continue;
    }
    if (pair.label == PairLabel::Unlabeled) {
      throw Error(ErrorCode::UnlabeledPair, "pair '" + pair.pair_id + "' has no label yet");
    }
    const Pixel closer = pair.label == PairLabel::FirstCloser ? pair.p1 : pair.p2;
    const Pixel farther = pair.label == PairLabel::FirstCloser ? pair.p2 : pair.p1;
    bool correct = false;
    if (auto it = model.maps.find(pair.image_id); it != model.maps.end()) {
      const DepthMap& map = it->second;
      if (map.contains(closer) && map.contains(farther) && map.is_valid(closer.x, closer.y) &&
          map.is_valid(farther.x, farther.y)) {
        const float vc = map.at(closer.x, closer.y);
        const float vf = map.at(farther.x, farther.y);
        correct = map.kind == DepthKind::InverseRelative ? vc > vf : vc < vf;
      }
    }
    ScenarioScore& s = report.per_scenario[static_cast<std::size_t>(pair.scenario)];
    ++s.labeled;
    ++report.overall.labeled;
    if (correct) {
      ++s.correct;
      ++report.overall.correct;
    }
  }
  return report;
}

json to_json(const AccuracyReport& r) {
  json per = json::object();
  for (Scenario s : kAllScenarios) {
    const ScenarioScore& sc = r.per_scenario[static_cast<std::size_t>(s)];
    per[std::string(to_string(s))] = {
        {"correct", sc.correct}, {"labeled", sc.labeled}, {"accuracy", sc.accuracy()}};
  }
  return json{{"model", r.model_tag},
              {"per_scenario", std::move(per)},
              {"correct", r.overall.correct},
              {"labeled", r.overall.labeled},
              {"skipped", r.skipped},
              {"mean_accuracy", r.mean()},
              {"reference_anchor",
               "published ViT-G model: 97.4% mean accuracy (documentation only, not reproduced)"}};
}

AccuracyReport accuracy_from_json(const json& j) {
  AccuracyReport r;
  r.model_tag = j.at("model").get<std::string>();
  const json& per = j.at("per_scenario");
  for (Scenario s : kAllScenarios) {
    const std::string key(to_string(s));
    if (!per.contains(key)) continue;
    ScenarioScore& sc = r.per_scenario[static_cast<std::size_t>(s)];
    sc.correct = per[key].at("correct").get<std::size_t>();
    sc.labeled = per[key].at("labeled").get<std::size_t>();
  }
  r.overall.correct = j.at("correct").get<std::size_t>();
  r.overall.labeled = j.at("labeled").get<std::size_t>();
  r.skipped = j.value("skipped", std::size_t{0});
  return r;
}

std::string format_accuracy_table(std::span<const AccuracyReport> reports) {
  std::vector<std::string> header{"model"};
  for (Scenario s : kAllScenarios) header.emplace_back(display_name(s));
  header.emplace_back("Mean");
  header.emplace_back("pairs");

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    std::vector<std::string> row{r.model_tag.empty() ? "-" : r.model_tag};
    for (Scenario s : kAllScenarios) {
      const ScenarioScore& sc = r.per_scenario[static_cast<std::size_t>(s)];
      char buf[16];
      if (sc.labeled == 0) {
        row.emplace_back("-");
      } else {
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * sc.accuracy());
        row.emplace_back(buf);
      }
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * r.mean());
    row.emplace_back(buf);
    row.push_back(std::to_string(r.overall.labeled));
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) widths[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  out << "Pair accuracy (%) per scenario; reference anchor (documentation only): ViT-G 97.4\n";
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out << "  ";
      const std::string& s = cells[c];
      if (c == 0) {
        out << s << std::string(widths[c] - s.size(), ' ');
      } else {
        out << std::string(widths[c] - s.size(), ' ') << s;
      }
    }
    out << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : widths) total += w;
  out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
  for (const auto& row : rows) emit(row);
  return out.str();
}

} // namespace depthkit
