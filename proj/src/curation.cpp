#include "depthkit/curation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "depthkit/depthio.hpp"
#include "depthkit/error.hpp"
#include "depthkit/losses.hpp"
#include "depthkit/parallel.hpp"

namespace depthkit {

void CurationConfig::validate() const {
  if (!(n >= 0.0 && n < 1.0)) {
    throw Error(ErrorCode::ConfigError, "curation fraction n must lie in [0, 1)");
  }
}

std::pair<ValidMask, CurationReport> mask_top_loss(const ScalarMap& loss, const ValidMask& mask,
                                                   const CurationConfig& cfg) {
  cfg.validate();
  if (loss.width != mask.width() || loss.height != mask.height()) {
    throw Error(ErrorCode::InvalidArgument, "loss map and mask shapes differ");
  }
  CurationReport report;
  report.pixels_total = mask.size();

  std::vector<std::size_t> order;
  order.reserve(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) order.push_back(i);
  }
  report.pixels_valid_before = order.size();
  const auto k = static_cast<std::size_t>(std::floor(cfg.n * double(order.size())));
  report.pixels_masked = k;

  ValidMask out = mask;
  if (k == 0) return {std::move(out), std::move(report)};

  // total order: loss descending, then index descending
  auto before = [&](std::size_t a, std::size_t b) {
    const double la = loss.values[a], lb = loss.values[b];
    if (la != lb) return la > lb;
    return a > b;
  };
  std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(), before);
  for (std::size_t j = 0; j < k; ++j) out.set(order[j], false);
  report.loss_threshold = loss.values[order[k - 1]];
  return {std::move(out), std::move(report)};
}

ScalarMap curation_loss_map(const DepthMap& teacher, const DepthMap& counterpart,
                            CurationLoss kind) {
  require_same_shape(teacher, counterpart);
  const ValidMask common = teacher.valid & counterpart.valid;
  if (kind == CurationLoss::SsiResidual) {
    return ssi_loss(teacher, counterpart, common).per_pixel;
  }
  ScalarMap out(teacher.width, teacher.height);
  for (std::size_t i = 0; i < common.size(); ++i) {
    if (common[i]) out.values[i] = std::abs(double(teacher.values[i]) - double(counterpart.values[i]));
  }
  return out;
}

namespace {

std::string file_stem_for(std::size_t index, const std::string& id) {
  std::string safe;
  for (char c : id) {
    safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  }
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%05zu_", index);
  return prefix + safe;
}

} // namespace

CurationResult curate_dataset(const PredictionManifest& teacher,
                              const PredictionManifest& counterpart, const CurationConfig& cfg,
                              const std::filesystem::path& out_dir, int threads) {
  cfg.validate();
  require_same_ids(teacher, counterpart);

  CurationResult result;
  result.manifest.source_tag = teacher.source_tag + "_curated";
  result.manifest.role = DatasetRole::PseudoLabeledReal;
  result.manifest.kind = teacher.kind;
  result.manifest.entries.resize(teacher.entries.size());
  result.reports.resize(teacher.entries.size());

  parallel_for(teacher.entries.size(), threads, [&](std::size_t i) {
    const ManifestEntry& t = teacher.entries[i];
    const ManifestEntry& c = *counterpart.find(t.image_id);
    const DepthMap tmap = load_entry_depth(teacher, t);
    const DepthMap cmap = load_entry_depth(counterpart, c);
    if (tmap.width != cmap.width || tmap.height != cmap.height) {
      throw Error(ErrorCode::InvalidArgument, "image '" + t.image_id + "': teacher and counterpart shapes differ");
    }
    const ValidMask common = tmap.valid & cmap.valid;
    ScalarMap loss;
    try {
      loss = curation_loss_map(tmap, cmap, cfg.loss_kind);
    } catch (const Error& e) {
      throw Error(e.code(), "image '" + t.image_id + "': " + e.detail());
    }
    auto [mask, report] = mask_top_loss(loss, common, cfg);
    report.image_id = t.image_id;
    const auto mask_path = out_dir / "masks" / (file_stem_for(i, t.image_id) + ".png");
    save_mask(mask, mask_path);
    result.manifest.entries[i] = ManifestEntry{t.image_id, t.image, t.depth, mask_path};
    result.reports[i] = std::move(report);
  });
  return result;
}

std::string report_to_jsonl(const std::vector<CurationReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports) {
    nlohmann::json j;
    j["image_id"] = r.image_id;
    j["pixels_total"] = r.pixels_total;
    j["pixels_valid_before"] = r.pixels_valid_before;
    j["pixels_masked"] = r.pixels_masked;
    j["loss_threshold"] = r.loss_threshold ? nlohmann::json(*r.loss_threshold) : nlohmann::json();
    out << j.dump() << '\n';
  }
  return out.str();
}

} // namespace depthkit
