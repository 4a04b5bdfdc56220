#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "depthkit/depth_map.hpp"

namespace depthkit {

enum class DatasetRole { LabeledSynthetic, PseudoLabeledReal, GroundTruth, ModelPrediction };

std::string_view to_string(DatasetRole role);
DatasetRole dataset_role_from_string(std::string_view s);

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path image;
  std::filesystem::path depth;
  std::optional<std::filesystem::path> mask;
};

/// A set of (image, depth[, mask]) records. Paths held in memory are resolved
/// (relative paths in the file are relative to the manifest's directory).
struct PredictionManifest {
  std::vector<ManifestEntry> entries;
  std::string source_tag;
  DatasetRole role = DatasetRole::ModelPrediction;
  /// Kind for depth files that do not declare one (PFM, undecorated PNG).
  DepthKind kind = DepthKind::InverseRelative;

  const ManifestEntry* find(std::string_view image_id) const;
};

/// Parses a JSON-Lines manifest. Each line carries `image_id`, `image`,
/// `depth` and optionally `mask`; blank lines are ignored. Optional `source`,
/// `role` and `kind` ("inverse" | "metric") keys on the first record override
/// the defaults (file stem, `role`, inverse). Fails as a whole on the first bad record, duplicate id
/// (DuplicateImageId) or unresolvable path (MissingFile).
PredictionManifest load_manifest(const std::filesystem::path& path,
                                 DatasetRole role = DatasetRole::ModelPrediction);

/// Writes paths relative to the manifest's directory where possible.
void save_manifest(const PredictionManifest& manifest, const std::filesystem::path& path);

/// Loads the entry's depth file (format from extension) and applies its mask.
DepthMap load_entry_depth(const ManifestEntry& entry,
                          DepthKind kind = DepthKind::InverseRelative);
DepthMap load_entry_depth(const PredictionManifest& manifest, const ManifestEntry& entry);

std::string_view to_string(DepthKind kind);
DepthKind depth_kind_from_string(std::string_view s);

/// Image ids shared by both manifests in `a`'s order; throws
/// MissingCounterpart naming the first id present in only one of them.
std::vector<std::string> require_same_ids(const PredictionManifest& a,
                                          const PredictionManifest& b);

} // namespace depthkit
