#include "depthkit/scenarios.hpp"

#include "depthkit/error.hpp"
#include "depthkit/toml_lite.hpp"

namespace depthkit {

std::string_view to_string(Scenario s) {
  switch (s) {
  case Scenario::Indoor: return "indoor";
  case Scenario::Outdoor: return "outdoor";
  case Scenario::NonReal: return "non_real";
  case Scenario::TransparentReflective: return "transparent_reflective";
  case Scenario::AdverseStyle: return "adverse_style";
  case Scenario::Aerial: return "aerial";
  case Scenario::Underwater: return "underwater";
  case Scenario::Object: return "object";
  }
  return "?";
}

std::string_view display_name(Scenario s) {
  switch (s) {
  case Scenario::Indoor: return "Indoor";
  case Scenario::Outdoor: return "Outdoor";
  case Scenario::NonReal: return "Non-real";
  case Scenario::TransparentReflective: return "Trans./Reflect.";
  case Scenario::AdverseStyle: return "Adverse";
  case Scenario::Aerial: return "Aerial";
  case Scenario::Underwater: return "Underwater";
  case Scenario::Object: return "Object";
  }
  return "?";
}

Scenario scenario_from_string(std::string_view tag) {
  for (Scenario s : kAllScenarios) {
    if (to_string(s) == tag) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + std::string(tag) + "'");
}

const ScenarioTaxonomy& ScenarioTaxonomy::builtin() {
  static const ScenarioTaxonomy taxonomy{{{
      {"room", "home", "living room", "kitchen", "bedroom", "office", "store", "library",
       "restaurant", "museum", "hall"},
      {"road", "outdoor", "street", "urban", "rural", "park", "beach", "mountain", "downtown",
       "alley", "skyscraper", "traffic", "bridge", "construction", "parade", "fireworks",
       "festival", "sporting event"},
      {"AI-generated", "computer-generated", "artwork", "oil painting", "impressionism",
       "realism", "abstract art", "cartoon", "animation", "comic", "caricature", "illustration",
       "fantasy", "sci-fi", "cyberpunk", "alien", "mythology"},
      {"glass", "window", "crystal", "ice", "water", "transparent", "clear", "acrylic", "plastic",
       "reflective", "mirror", "see-through"},
      {"fog", "dark", "night", "mid-night", "overexposed", "blur", "snow", "rain"},
      {"aerial", "landscape", "drone view", "bird's eye view", "city", "cityscape",
       "satellite view", "top-down view"},
      {"underwater", "ocean", "sea", "coral reef", "diving", "submarine", "aquarium",
       "marine life", "shipwreck"},
      {"car", "bicycle", "motorcycle", "airplane", "bus", "train", "truck", "boat",
       "traffic light", "fire hydrant", "stop sign", "parking meter", "bench", "bird", "cat",
       "dog", "horse", "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "backpack",
       "umbrella", "sports ball", "kite", "baseball bat", "cup", "fork", "knife", "spoon", "bowl",
       "banana", "apple", "chair", "bed", "dining table", "microwave", "oven", "toaster", "sink",
       "refrigerator", "vase", "scissors", "teddy bear"},
  }}};
  return taxonomy;
}

ScenarioTaxonomy ScenarioTaxonomy::load(const std::filesystem::path& path) {
  const toml::Table root = toml::parse_file(path);
  ScenarioTaxonomy t;
  for (Scenario s : kAllScenarios) {
    const toml::Table* section = root.table(to_string(s));
    if (!section) {
      throw Error(ErrorCode::ConfigError,
                  path.string() + ": missing scenario [" + std::string(to_string(s)) + "]");
    }
    auto words = section->strings("keywords");
    if (!words || words->empty()) {
      throw Error(ErrorCode::ConfigError, path.string() + ": scenario '" +
                                              std::string(to_string(s)) + "' has no keywords");
    }
    t.keywords[static_cast<std::size_t>(s)] = std::move(*words);
  }
  if (root.keys().size() != kScenarioCount) {
    throw Error(ErrorCode::ConfigError, path.string() + ": expected exactly 8 scenarios");
  }
  return t;
}

} // namespace depthkit
