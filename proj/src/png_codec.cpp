#include "depthkit/png_codec.hpp"

#include <zlib.h>

#include <array>
#include <cstdlib>
#include <cstring>
#include <string_view>

#include "depthkit/depth_map.hpp"
#include "depthkit/error.hpp"

namespace depthkit::png {

namespace {

constexpr std::array<std::uint8_t, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, std::string_view type,
               std::span<const std::uint8_t> data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type.begin(), type.end());
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

} // namespace

const std::string* Image::find_text(const std::string& key) const {
  for (const auto& [k, v] : text) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorCode::InvalidArgument, "png: only gray and RGB images are supported");
  }
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    throw Error(ErrorCode::InvalidArgument, "png: bit depth must be 8 or 16");
  }
  if (image.width <= 0 || image.height <= 0 || image.width > kMaxSide || image.height > kMaxSide) {
    throw Error(ErrorCode::DimensionOverflow, "png: unsupported dimensions");
  }
  const std::size_t row_samples = std::size_t(image.width) * std::size_t(image.channels);
  if (image.samples.size() != row_samples * std::size_t(image.height)) {
    throw Error(ErrorCode::InvalidArgument, "png: sample count does not match dimensions");
  }

  const std::size_t bytes_per_sample = image.bit_depth / 8;
  const std::size_t stride = row_samples * bytes_per_sample;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * std::size_t(image.height));
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0); // filter: none
    const std::uint16_t* row = image.samples.data() + std::size_t(y) * row_samples;
    for (std::size_t i = 0; i < row_samples; ++i) {
      if (bytes_per_sample == 2) {
        raw.push_back(std::uint8_t(row[i] >> 8));
        raw.push_back(std::uint8_t(row[i] & 0xff));
      } else {
        raw.push_back(std::uint8_t(row[i] & 0xff));
      }
    }
  }

  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error(ErrorCode::IoFailure, "png: deflate failed");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(image.width));
  put_be32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.push_back(static_cast<std::uint8_t>(image.bit_depth));
  ihdr.push_back(image.channels == 1 ? 0 : 2);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  for (const auto& [key, value] : image.text) {
    std::vector<std::uint8_t> body(key.begin(), key.end());
    body.push_back(0);
    body.insert(body.end(), value.begin(), value.end());
    put_chunk(out, "tEXt", body);
  }
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

Image decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSignature.size()) {
    throw Error(ErrorCode::TruncatedPayload, "png: file shorter than signature", bytes.size());
  }
  if (std::memcmp(bytes.data(), kSignature.data(), kSignature.size()) != 0) {
    throw Error(ErrorCode::MalformedHeader, "png: bad signature", 0);
  }

  Image image;
  bool have_header = false;
  bool have_end = false;
  int color_type = 0;
  std::vector<std::uint8_t> compressed;
  std::size_t first_idat = 0;
  std::size_t pos = kSignature.size();

  while (pos < bytes.size()) {
    const std::size_t chunk_at = pos;
    if (bytes.size() - pos < 12) {
      throw Error(ErrorCode::TruncatedPayload, "png: truncated chunk header", chunk_at);
    }
    const std::uint32_t length = read_be32(bytes.data() + pos);
    const std::string_view type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
    if (length > 0x7fffffffu || bytes.size() - pos - 12 < length) {
      throw Error(ErrorCode::TruncatedPayload, "png: chunk runs past end of file", chunk_at);
    }
    const std::uint8_t* data = bytes.data() + pos + 8;
    const std::uint32_t stored_crc = read_be32(data + length);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data() + pos + 4, length + 4);
    if (static_cast<std::uint32_t>(crc) != stored_crc) {
      throw Error(ErrorCode::MalformedHeader, "png: CRC mismatch in chunk", chunk_at);
    }
    pos += 12 + std::size_t(length);

    if (!have_header && type != "IHDR") {
      throw Error(ErrorCode::MalformedHeader, "png: first chunk is not IHDR", chunk_at);
    }
    if (type == "IHDR") {
      if (have_header || length != 13) {
        throw Error(ErrorCode::MalformedHeader, "png: bad IHDR", chunk_at);
      }
      const std::uint32_t w = read_be32(data);
      const std::uint32_t h = read_be32(data + 4);
      if (w == 0 || h == 0) {
        throw Error(ErrorCode::MalformedHeader, "png: zero dimension", chunk_at + 8);
      }
      if (w > std::uint32_t(kMaxSide) || h > std::uint32_t(kMaxSide)) {
        throw Error(ErrorCode::DimensionOverflow, "png: dimension exceeds limit", chunk_at + 8);
      }
      image.width = int(w);
      image.height = int(h);
      image.bit_depth = data[8];
      color_type = data[9];
      if (image.bit_depth != 8 && image.bit_depth != 16) {
        throw Error(ErrorCode::MalformedHeader, "png: unsupported bit depth", chunk_at + 16);
      }
      if (color_type != 0 && color_type != 2) {
        throw Error(ErrorCode::MalformedHeader, "png: unsupported color type", chunk_at + 17);
      }
      if (data[10] != 0 || data[11] != 0 || data[12] != 0) {
        throw Error(ErrorCode::MalformedHeader,
                    "png: unsupported compression, filter or interlace method", chunk_at + 18);
      }
      image.channels = color_type == 0 ? 1 : 3;
      have_header = true;
    } else if (type == "IDAT") {
      if (compressed.empty()) first_idat = chunk_at;
      compressed.insert(compressed.end(), data, data + length);
    } else if (type == "tEXt") {
      const auto* end = data + length;
      const auto* sep = static_cast<const std::uint8_t*>(std::memchr(data, 0, length));
      if (sep == nullptr) {
        throw Error(ErrorCode::MalformedHeader, "png: tEXt chunk without separator", chunk_at);
      }
      image.text.emplace_back(std::string(data, sep), std::string(sep + 1, end));
    } else if (type == "IEND") {
      have_end = true;
      break;
    } else if ((type[0] & 0x20) == 0) {
      throw Error(ErrorCode::MalformedHeader,
                  "png: unsupported critical chunk " + std::string(type), chunk_at);
    }
  }
  if (!have_header) {
    throw Error(ErrorCode::TruncatedPayload, "png: missing IHDR", pos);
  }
  if (!have_end) {
    throw Error(ErrorCode::TruncatedPayload, "png: missing IEND", pos);
  }
  if (compressed.empty()) {
    throw Error(ErrorCode::TruncatedPayload, "png: no image data", pos);
  }

  const std::size_t bps = std::size_t(image.bit_depth) / 8;
  const std::size_t bpp = bps * std::size_t(image.channels);
  const std::size_t stride = std::size_t(image.width) * bpp;
  const std::size_t expected = (stride + 1) * std::size_t(image.height);
  std::vector<std::uint8_t> raw(expected);

  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) {
    throw Error(ErrorCode::IoFailure, "png: inflate init failed");
  }
  zs.next_in = compressed.data();
  zs.avail_in = static_cast<uInt>(compressed.size());
  zs.next_out = raw.data();
  zs.avail_out = static_cast<uInt>(raw.size());
  const int rc = inflate(&zs, Z_FINISH);
  const std::size_t produced = raw.size() - zs.avail_out;
  inflateEnd(&zs);
  if (rc == Z_DATA_ERROR || rc == Z_NEED_DICT || rc == Z_MEM_ERROR) {
    throw Error(ErrorCode::MalformedHeader, "png: corrupt deflate stream", first_idat);
  }
  if (rc == Z_BUF_ERROR && produced == expected) {
    throw Error(ErrorCode::MalformedHeader, "png: more image data than dimensions allow", first_idat);
  }
  if (produced != expected) {
    throw Error(ErrorCode::TruncatedPayload, "png: image data shorter than dimensions require",
                first_idat);
  }

  std::vector<std::uint8_t> prev(stride, 0);
  std::vector<std::uint8_t> cur(stride);
  image.samples.resize(std::size_t(image.width) * std::size_t(image.height) *
                       std::size_t(image.channels));
  std::size_t out = 0;
  for (int y = 0; y < image.height; ++y) {
    const std::uint8_t* row = raw.data() + std::size_t(y) * (stride + 1);
    const std::uint8_t filter = row[0];
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= bpp ? cur[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= bpp ? prev[i - bpp] : 0;
      int v = row[1 + i];
      switch (filter) {
      case 0: break;
      case 1: v += a; break;
      case 2: v += b; break;
      case 3: v += (a + b) / 2; break;
      case 4: v += paeth(a, b, c); break;
      default:
        throw Error(ErrorCode::MalformedHeader, "png: unknown row filter", first_idat);
      }
      cur[i] = static_cast<std::uint8_t>(v & 0xff);
    }
    for (std::size_t i = 0; i < stride; i += bps) {
      image.samples[out++] = bps == 2 ? std::uint16_t((cur[i] << 8) | cur[i + 1]) : cur[i];
    }
    std::swap(prev, cur);
  }
  return image;
}

} // namespace depthkit::png
