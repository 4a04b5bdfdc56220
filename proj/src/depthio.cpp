#include "depthkit/depthio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "depthkit/error.hpp"
#include "depthkit/png_codec.hpp"

namespace depthkit {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

constexpr std::uint32_t kRawMagic = 0x31464244; // "DBF1" read as little-endian u32
constexpr std::size_t kRawHeader = 16;

std::uint32_t read_le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 24));
}

float float_from_bits(std::uint32_t bits) { return std::bit_cast<float>(bits); }
std::uint32_t bits_from_float(float v) { return std::bit_cast<std::uint32_t>(v); }

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

void check_side(std::uint64_t side, std::size_t offset) {
  if (side == 0) {
    throw Error(ErrorCode::MalformedHeader, "zero dimension", offset);
  }
  if (side > std::uint64_t(kMaxSide)) {
    throw Error(ErrorCode::DimensionOverflow,
                "dimension " + std::to_string(side) + " exceeds " + std::to_string(kMaxSide),
                offset);
  }
}

// Invalid pixels are always stored as exact zero.
float stored_value(const DepthMap& map, std::size_t i) {
  if (!map.valid[i]) return 0.0f;
  const float v = map.values[i];
  if (v == 0.0f || !std::isfinite(v)) {
    throw Error(ErrorCode::UnrepresentableValue,
                "valid pixel " + std::to_string(i) + " holds a value that reads back as invalid");
  }
  return v;
}

// ---------------------------------------------------------------- RawF32

DepthMap decode_raw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kRawHeader) {
    throw Error(ErrorCode::TruncatedPayload, "raw: header shorter than 16 bytes", bytes.size());
  }
  if (read_le32(bytes.data()) != kRawMagic) {
    throw Error(ErrorCode::MalformedHeader, "raw: bad magic, expected DBF1", 0);
  }
  const std::uint32_t w = read_le32(bytes.data() + 4);
  const std::uint32_t h = read_le32(bytes.data() + 8);
  const std::uint32_t kind = read_le32(bytes.data() + 12);
  check_side(w, 4);
  check_side(h, 8);
  if (kind > 1) {
    throw Error(ErrorCode::MalformedHeader, "raw: unknown depth kind " + std::to_string(kind), 12);
  }
  const std::size_t n = std::size_t(w) * std::size_t(h);
  const std::size_t need = kRawHeader + n * 4;
  if (bytes.size() < need) {
    throw Error(ErrorCode::TruncatedPayload,
                "raw: payload holds " + std::to_string((bytes.size() - kRawHeader) / 4) +
                    " of " + std::to_string(n) + " values",
                bytes.size());
  }
  if (bytes.size() > need) {
    throw Error(ErrorCode::MalformedHeader, "raw: trailing bytes after payload", need);
  }
  std::vector<float> vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    vals[i] = float_from_bits(read_le32(bytes.data() + kRawHeader + 4 * i));
  }
  return DepthMap::from_values(int(w), int(h), std::move(vals), static_cast<DepthKind>(kind));
}

std::vector<std::uint8_t> encode_raw(const DepthMap& map) {
  std::vector<std::uint8_t> out;
  out.reserve(kRawHeader + map.values.size() * 4);
  put_le32(out, kRawMagic);
  put_le32(out, std::uint32_t(map.width));
  put_le32(out, std::uint32_t(map.height));
  put_le32(out, static_cast<std::uint32_t>(map.kind));
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    put_le32(out, bits_from_float(stored_value(map, i)));
  }
  return out;
}

// ---------------------------------------------------------------- PFM

struct PfmCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  static bool is_space(std::uint8_t c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }

  void skip_space() {
    while (pos < bytes.size() && is_space(bytes[pos])) ++pos;
  }

  std::string_view token() {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && !is_space(bytes[pos]) && pos - start < 64) ++pos;
    if (start == pos) {
      throw Error(ErrorCode::TruncatedPayload, "pfm: header ends early", pos);
    }
    return {reinterpret_cast<const char*>(bytes.data() + start), pos - start};
  }
};

DepthMap decode_pfm(std::span<const std::uint8_t> bytes, DepthKind kind) {
  if (bytes.size() < 2) {
    throw Error(ErrorCode::TruncatedPayload, "pfm: file shorter than magic", bytes.size());
  }
  if (bytes[0] != 'P' || bytes[1] != 'f') {
    throw Error(ErrorCode::MalformedHeader, "pfm: expected grayscale 'Pf' magic", 0);
  }
  PfmCursor cur{bytes, 2};
  if (cur.pos >= bytes.size() || !PfmCursor::is_space(bytes[cur.pos])) {
    throw Error(ErrorCode::MalformedHeader, "pfm: magic not followed by whitespace", cur.pos);
  }

  auto parse_int = [&](std::string_view tok, std::size_t at) -> std::uint64_t {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
      if (ec == std::errc::result_out_of_range) {
        throw Error(ErrorCode::DimensionOverflow, "pfm: dimension out of range", at);
      }
      throw Error(ErrorCode::MalformedHeader, "pfm: bad dimension token", at);
    }
    return v;
  };

  auto tok = cur.token();
  std::size_t at = cur.pos - tok.size();
  const auto w = parse_int(tok, at);
  check_side(w, at);
  tok = cur.token();
  at = cur.pos - tok.size();
  const auto h = parse_int(tok, at);
  check_side(h, at);

  tok = cur.token();
  at = cur.pos - tok.size();
  double scale = 0.0;
  {
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), scale);
    if (ec != std::errc() || p != tok.data() + tok.size() || scale == 0.0 || !std::isfinite(scale)) {
      throw Error(ErrorCode::MalformedHeader, "pfm: bad scale/endianness token", at);
    }
  }
  // exactly one whitespace byte separates the header from the payload
  if (cur.pos >= bytes.size()) {
    throw Error(ErrorCode::TruncatedPayload, "pfm: missing payload", cur.pos);
  }
  if (!PfmCursor::is_space(bytes[cur.pos])) {
    throw Error(ErrorCode::MalformedHeader, "pfm: header not terminated", cur.pos);
  }
  const std::size_t data_at = cur.pos + 1;
  const bool little = scale < 0.0;

  const std::size_t n = std::size_t(w) * std::size_t(h);
  const std::size_t available = bytes.size() - data_at;
  if (available < n * 4) {
    throw Error(ErrorCode::TruncatedPayload,
                "pfm: payload holds " + std::to_string(available / 4) + " of " +
                    std::to_string(n) + " values",
                bytes.size());
  }
  if (available > n * 4) {
    throw Error(ErrorCode::MalformedHeader, "pfm: trailing bytes after payload", data_at + n * 4);
  }

  std::vector<float> vals(n);
  const int width = int(w);
  const int height = int(h);
  for (int row = 0; row < height; ++row) {
    // PFM stores rows bottom-to-top
    const std::size_t src_row = std::size_t(height - 1 - row);
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits = read_le32(bytes.data() + data_at + 4 * (src_row * std::size_t(width) + std::size_t(x)));
      if (!little) bits = byteswap32(bits);
      vals[std::size_t(row) * std::size_t(width) + std::size_t(x)] = float_from_bits(bits);
    }
  }
  return DepthMap::from_values(width, height, std::move(vals), kind);
}

std::vector<std::uint8_t> encode_pfm(const DepthMap& map) {
  const std::string header =
      "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + map.values.size() * 4);
  for (int row = map.height - 1; row >= 0; --row) {
    for (int x = 0; x < map.width; ++x) {
      put_le32(out, bits_from_float(stored_value(map, map.index(x, row))));
    }
  }
  return out;
}

// ---------------------------------------------------------------- PNG16

constexpr const char* kScaleKey = "depth_scale";
constexpr const char* kKindKey = "depth_kind";

std::string format_scale(double scale) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", scale);
  return buf;
}

DepthMap decode_png16(std::span<const std::uint8_t> bytes, DepthKind kind) {
  png::Image img = png::decode(bytes);
  if (img.channels != 1 || img.bit_depth != 16) {
    throw Error(ErrorCode::MalformedHeader, "png16: depth maps must be 16-bit grayscale", 24);
  }
  double scale = 1.0;
  if (const std::string* s = img.find_text(kScaleKey)) {
    auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), scale);
    if (ec != std::errc() || p != s->data() + s->size() || !(scale > 0.0) || !std::isfinite(scale)) {
      throw Error(ErrorCode::MalformedHeader, "png16: bad depth_scale text chunk '" + *s + "'");
    }
  }
  if (const std::string* k = img.find_text(kKindKey)) {
    if (*k == "metric") {
      kind = DepthKind::MetricMeters;
    } else if (*k == "inverse") {
      kind = DepthKind::InverseRelative;
    } else {
      throw Error(ErrorCode::MalformedHeader, "png16: unknown depth_kind '" + *k + "'");
    }
  }
  std::vector<float> vals(img.samples.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = static_cast<float>(double(img.samples[i]) * scale);
  }
  return DepthMap::from_values(img.width, img.height, std::move(vals), kind);
}

std::vector<std::uint8_t> encode_png16(const DepthMap& map, const SaveOptions& options) {
  double max_value = 0.0;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (!map.valid[i]) continue;
    const float v = stored_value(map, i);
    if (v < 0.0f) {
      throw Error(ErrorCode::UnrepresentableValue,
                  "png16 cannot store negative value at pixel " + std::to_string(i));
    }
    max_value = std::max(max_value, double(v));
  }
  double scale = 1.0;
  if (options.png_scale) {
    scale = *options.png_scale;
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      throw Error(ErrorCode::InvalidArgument, "png16 scale must be positive and finite");
    }
  } else if (max_value > 0.0) {
    scale = max_value / 65535.0;
  }

  png::Image img;
  img.width = map.width;
  img.height = map.height;
  img.channels = 1;
  img.bit_depth = 16;
  img.samples.resize(map.values.size(), 0);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (!map.valid[i]) continue;
    const double q = std::round(double(map.values[i]) / scale);
    if (q > 65535.0) {
      throw Error(ErrorCode::UnrepresentableValue,
                  "value at pixel " + std::to_string(i) + " exceeds declared range " +
                      format_scale(scale * 65535.0));
    }
    // a valid pixel never quantizes to the invalid sentinel
    img.samples[i] = static_cast<std::uint16_t>(std::max(1.0, q));
  }
  img.text.emplace_back(kScaleKey, format_scale(scale));
  img.text.emplace_back(kKindKey, map.kind == DepthKind::MetricMeters ? "metric" : "inverse");
  return png::encode(img);
}

} // namespace

DepthFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pfm") return DepthFormat::PFM;
  if (ext == ".png") return DepthFormat::PNG16;
  if (ext == ".dbf" || ext == ".f32") return DepthFormat::RawF32;
  throw Error(ErrorCode::InvalidArgument, "cannot infer depth format from '" + path.string() + "'");
}

std::string_view to_string(DepthFormat format) {
  switch (format) {
  case DepthFormat::PFM: return "pfm";
  case DepthFormat::PNG16: return "png16";
  case DepthFormat::RawF32: return "raw";
  }
  return "?";
}

DepthMap decode_depth(std::span<const std::uint8_t> bytes, DepthFormat format, DepthKind kind) {
  switch (format) {
  case DepthFormat::PFM: return decode_pfm(bytes, kind);
  case DepthFormat::PNG16: return decode_png16(bytes, kind);
  case DepthFormat::RawF32: return decode_raw(bytes);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown depth format");
}

std::vector<std::uint8_t> encode_depth(const DepthMap& map, DepthFormat format,
                                       const SaveOptions& options) {
  map.check_invariants();
  if (map.width <= 0 || map.height <= 0 || map.width > kMaxSide || map.height > kMaxSide) {
    throw Error(ErrorCode::DimensionOverflow, "cannot encode map of size " +
                                                  std::to_string(map.width) + "x" +
                                                  std::to_string(map.height));
  }
  switch (format) {
  case DepthFormat::PFM: return encode_pfm(map);
  case DepthFormat::PNG16: return encode_png16(map, options);
  case DepthFormat::RawF32: return encode_raw(map);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown depth format");
}

DepthMap load_depth(const std::filesystem::path& path, DepthFormat format, DepthKind kind) {
  const auto bytes = read_file(path);
  try {
    return decode_depth(bytes, format, kind);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail(), e.byte_offset());
  }
}

void save_depth(const DepthMap& map, const std::filesystem::path& path, DepthFormat format,
                const SaveOptions& options) {
  write_file(path, encode_depth(map, format, options));
}

ValidMask load_mask(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  png::Image img = png::decode(bytes);
  if (img.channels != 1) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": mask must be grayscale", 25);
  }
  ValidMask mask(img.width, img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    mask.set(i, img.samples[i] != 0);
  }
  return mask;
}

void save_mask(const ValidMask& mask, const std::filesystem::path& path) {
  png::Image img;
  img.width = mask.width();
  img.height = mask.height();
  img.channels = 1;
  img.bit_depth = 8;
  img.samples.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    img.samples[i] = mask[i] ? 255 : 0;
  }
  write_file(path, png::encode(img));
}

void save_rgb_png(int width, int height, std::span<const std::uint8_t> rgb,
                  const std::filesystem::path& path) {
  png::Image img;
  img.width = width;
  img.height = height;
  img.channels = 3;
  img.bit_depth = 8;
  img.samples.assign(rgb.begin(), rgb.end());
  write_file(path, png::encode(img));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::MissingFile, "cannot open '" + path.string() + "'");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw Error(ErrorCode::IoFailure, "read failed for '" + path.string() + "'");
  }
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoFailure, "cannot open '" + path.string() + "' for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::IoFailure, "write failed for '" + path.string() + "'");
  }
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace depthkit
