#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "depthkit/depth_map.hpp"

namespace depthkit {

enum class DepthFormat { PFM, PNG16, RawF32 };

/// `.pfm`, `.png`, `.dbf` / `.f32`. Throws InvalidArgument otherwise.
DepthFormat format_from_path(const std::filesystem::path& path);
std::string_view to_string(DepthFormat format);

struct SaveOptions {
  /// PNG16 only: explicit value per quantization step. When unset the scale
  /// is chosen so the largest valid value maps to 65535.
  std::optional<double> png_scale;
};

// In-memory codecs. Decoders never read past the span and report failures as
// depthkit::Error with the byte offset where parsing stopped.
DepthMap decode_depth(std::span<const std::uint8_t> bytes, DepthFormat format,
                      DepthKind kind = DepthKind::InverseRelative);
std::vector<std::uint8_t> encode_depth(const DepthMap& map, DepthFormat format,
                                       const SaveOptions& options = {});

/// `kind` applies to PFM and PNG16 files that do not declare one; RawF32
/// files always carry their own kind.
DepthMap load_depth(const std::filesystem::path& path, DepthFormat format,
                    DepthKind kind = DepthKind::InverseRelative);
void save_depth(const DepthMap& map, const std::filesystem::path& path, DepthFormat format,
                const SaveOptions& options = {});

/// Masks are 8-bit grayscale PNGs: nonzero = valid.
ValidMask load_mask(const std::filesystem::path& path);
void save_mask(const ValidMask& mask, const std::filesystem::path& path);

/// Writes an interleaved 8-bit RGB PNG.
void save_rgb_png(int width, int height, std::span<const std::uint8_t> rgb,
                  const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace depthkit
