#include "depthkit/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "depthkit/depthio.hpp"
#include "depthkit/error.hpp"

namespace depthkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(DatasetRole role) {
  switch (role) {
  case DatasetRole::LabeledSynthetic: return "labeled_synthetic";
  case DatasetRole::PseudoLabeledReal: return "pseudo_labeled_real";
  case DatasetRole::GroundTruth: return "ground_truth";
  case DatasetRole::ModelPrediction: return "model_prediction";
  }
  return "?";
}

DatasetRole dataset_role_from_string(std::string_view s) {
  if (s == "labeled_synthetic") return DatasetRole::LabeledSynthetic;
  if (s == "pseudo_labeled_real") return DatasetRole::PseudoLabeledReal;
  if (s == "ground_truth") return DatasetRole::GroundTruth;
  if (s == "model_prediction") return DatasetRole::ModelPrediction;
  throw Error(ErrorCode::InvalidArgument, "unknown dataset role '" + std::string(s) + "'");
}

const ManifestEntry* PredictionManifest::find(std::string_view image_id) const {
  for (const auto& e : entries) {
    if (e.image_id == image_id) return &e;
  }
  return nullptr;
}

namespace {

std::string required_string(const json& rec, const char* key, const fs::path& file, int line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw Error(ErrorCode::MalformedHeader, file.string() + ":" + std::to_string(line) +
                                                ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p, const std::string& id) {
  fs::path full = fs::path(p).is_absolute() ? fs::path(p) : base / p;
  if (!fs::exists(full)) {
    throw Error(ErrorCode::MissingFile,
                "image '" + id + "' references missing file '" + full.string() + "'");
  }
  return full.lexically_normal();
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p.generic_string();
  const fs::path rel = p.lexically_relative(base);
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

} // namespace

PredictionManifest load_manifest(const fs::path& path, DatasetRole role) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::MissingFile, "cannot open manifest '" + path.string() + "'");
  }
  PredictionManifest m;
  m.source_tag = path.stem().string();
  m.role = role;
  const fs::path base = path.parent_path();
  std::set<std::string> seen;
  std::string text;
  int line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedHeader,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object()) {
      throw Error(ErrorCode::MalformedHeader,
                  path.string() + ":" + std::to_string(line_no) + ": record is not an object");
    }
    if (m.entries.empty()) {
      if (auto it = rec.find("source"); it != rec.end() && it->is_string()) {
        m.source_tag = it->get<std::string>();
      }
      if (auto it = rec.find("role"); it != rec.end() && it->is_string()) {
        m.role = dataset_role_from_string(it->get<std::string>());
      }
      if (auto it = rec.find("kind"); it != rec.end() && it->is_string()) {
        m.kind = depth_kind_from_string(it->get<std::string>());
      }
    }
    ManifestEntry e;
    e.image_id = required_string(rec, "image_id", path, line_no);
    if (!seen.insert(e.image_id).second) {
      throw Error(ErrorCode::DuplicateImageId,
                  "duplicate image_id '" + e.image_id + "' in " + path.string());
    }
    e.image = resolve(base, required_string(rec, "image", path, line_no), e.image_id);
    e.depth = resolve(base, required_string(rec, "depth", path, line_no), e.image_id);
    if (auto it = rec.find("mask"); it != rec.end() && !it->is_null()) {
      if (!it->is_string()) {
        throw Error(ErrorCode::MalformedHeader,
                    path.string() + ":" + std::to_string(line_no) + ": mask must be a string");
      }
      e.mask = resolve(base, it->get<std::string>(), e.image_id);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const PredictionManifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path();
  std::ostringstream out;
  bool first = true;
  for (const auto& e : manifest.entries) {
    json rec;
    if (first) {
      rec["source"] = manifest.source_tag;
      rec["role"] = to_string(manifest.role);
      rec["kind"] = to_string(manifest.kind);
      first = false;
    }
    rec["image_id"] = e.image_id;
    rec["image"] = relative_to(e.image, base);
    rec["depth"] = relative_to(e.depth, base);
    if (e.mask) rec["mask"] = relative_to(*e.mask, base);
    out << rec.dump() << '\n';
  }
  write_text_file(path, out.str());
}

DepthMap load_entry_depth(const ManifestEntry& entry, DepthKind kind) {
  DepthMap map = load_depth(entry.depth, format_from_path(entry.depth), kind);
  if (entry.mask) {
    const ValidMask mask = load_mask(*entry.mask);
    if (!mask.same_shape(map.valid)) {
      throw Error(ErrorCode::InvalidArgument,
                  "mask '" + entry.mask->string() + "' does not match depth map shape");
    }
    map.valid = map.valid & mask;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      if (!map.valid[i]) map.values[i] = 0.0f;
    }
  }
  return map;
}

DepthMap load_entry_depth(const PredictionManifest& manifest, const ManifestEntry& entry) {
  return load_entry_depth(entry, manifest.kind);
}

std::string_view to_string(DepthKind kind) {
  return kind == DepthKind::MetricMeters ? "metric" : "inverse";
}

DepthKind depth_kind_from_string(std::string_view s) {
  if (s == "metric") return DepthKind::MetricMeters;
  if (s == "inverse") return DepthKind::InverseRelative;
  throw Error(ErrorCode::InvalidArgument, "unknown depth kind '" + std::string(s) + "'");
}

std::vector<std::string> require_same_ids(const PredictionManifest& a,
                                          const PredictionManifest& b) {
  std::vector<std::string> ids;
  for (const auto& e : a.entries) {
    if (!b.find(e.image_id)) {
      throw Error(ErrorCode::MissingCounterpart,
                  "image '" + e.image_id + "' has no counterpart in '" + b.source_tag + "'");
    }
    ids.push_back(e.image_id);
  }
  for (const auto& e : b.entries) {
    if (!a.find(e.image_id)) {
      throw Error(ErrorCode::MissingCounterpart,
                  "image '" + e.image_id + "' has no counterpart in '" + a.source_tag + "'");
    }
  }
  return ids;
}

} // namespace depthkit
