#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace depthkit {

enum class Scenario {
  Indoor,
  Outdoor,
  NonReal,
  TransparentReflective,
  AdverseStyle,
  Aerial,
  Underwater,
  Object,
};

inline constexpr std::size_t kScenarioCount = 8;
inline constexpr std::array<Scenario, kScenarioCount> kAllScenarios = {
    Scenario::Indoor,     Scenario::Outdoor, Scenario::NonReal,    Scenario::TransparentReflective,
    Scenario::AdverseStyle, Scenario::Aerial, Scenario::Underwater, Scenario::Object};

/// Stable snake_case tag used in files ("indoor", "non_real", ...).
std::string_view to_string(Scenario s);
/// Human-readable column title ("Transparent/reflective", ...).
std::string_view display_name(Scenario s);
Scenario scenario_from_string(std::string_view tag);

struct ScenarioTaxonomy {
  std::array<std::vector<std::string>, kScenarioCount> keywords;

  const std::vector<std::string>& keywords_for(Scenario s) const {
    return keywords[static_cast<std::size_t>(s)];
  }

  /// The built-in keyword lists used to collect images per scenario.
  static const ScenarioTaxonomy& builtin();
  /// Reads a file with one `[tag]` table per scenario holding `keywords = [...]`.
  /// All eight scenarios must be present with non-empty lists.
  static ScenarioTaxonomy load(const std::filesystem::path& path);

  friend bool operator==(const ScenarioTaxonomy&, const ScenarioTaxonomy&) = default;
};

} // namespace depthkit
