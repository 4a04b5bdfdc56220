#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace depthkit::png {

/// Decoded non-interlaced PNG. Samples are row-major, interleaved by channel,
/// widened to 16 bits regardless of the stored bit depth.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;   // 1 (gray) or 3 (RGB)
  int bit_depth = 16; // 8 or 16
  std::vector<std::uint16_t> samples;
  std::vector<std::pair<std::string, std::string>> text;

  const std::string* find_text(const std::string& key) const;
};

std::vector<std::uint8_t> encode(const Image& image);

/// Throws depthkit::Error (MalformedHeader / DimensionOverflow /
/// TruncatedPayload) with the byte offset of the failing chunk or field.
Image decode(std::span<const std::uint8_t> bytes);

} // namespace depthkit::png
