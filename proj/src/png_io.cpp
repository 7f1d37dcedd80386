#include "maskjudge/png_io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstring>

#include "maskjudge/error.hpp"

namespace maskjudge::png {
namespace {

constexpr std::array<std::uint8_t, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
constexpr std::size_t kMaxStoredBlock = 65535;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char (&type)[5],
               std::span<const std::uint8_t> data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

// zlib stream made of stored blocks only.
std::vector<std::uint8_t> zlib_stored(std::span<const std::uint8_t> raw) {
  std::vector<std::uint8_t> out;
  out.reserve(raw.size() + raw.size() / kMaxStoredBlock * 5 + 16);
  out.push_back(0x78);
  out.push_back(0x01);
  std::size_t offset = 0;
  do {
    const std::size_t len = std::min(kMaxStoredBlock, raw.size() - offset);
    const bool last = offset + len == raw.size();
    out.push_back(last ? 0x01 : 0x00);
    out.push_back(static_cast<std::uint8_t>(len & 0xff));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(~len & 0xff));
    out.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
    out.insert(out.end(), raw.begin() + offset, raw.begin() + offset + len);
    offset += len;
  } while (offset < raw.size());
  uLong adler = adler32(0L, Z_NULL, 0);
  adler = adler32(adler, raw.data(), static_cast<uInt>(raw.size()));
  put_u32(out, static_cast<std::uint32_t>(adler));
  return out;
}

std::vector<std::uint8_t> assemble(std::size_t width, std::size_t height, int bit_depth,
                                   int color_type, std::span<const std::uint8_t> scanlines) {
  std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(static_cast<std::uint8_t>(bit_depth));
  ihdr.push_back(static_cast<std::uint8_t>(color_type));
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", zlib_stored(scanlines));
  put_chunk(out, "IEND", {});
  return out;
}

struct ImageGuard {
  png_image image{};
  ImageGuard() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~ImageGuard() { png_image_free(&image); }
  ImageGuard(const ImageGuard&) = delete;
  ImageGuard& operator=(const ImageGuard&) = delete;
};

[[noreturn]] void fail(const png_image& image, const char* what) {
  std::string reason = what;
  if (image.message[0] != '\0') reason += std::string(": ") + image.message;
  throw Error(ErrorKind::Decode, "png decode failed, " + reason);
}

}  // namespace

DecodedPng decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSignature.size() ||
      !std::equal(kSignature.begin(), kSignature.end(), bytes.begin())) {
    throw Error(ErrorKind::Decode, "png decode failed: missing PNG signature");
  }
  ImageGuard guard;
  png_image& image = guard.image;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(image, "bad header");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const bool wide = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;

  DecodedPng out;
  out.width = image.width;
  out.height = image.height;
  out.channels = (color ? 3u : 1u) + (alpha ? 1u : 0u);
  out.bit_depth = wide ? 16 : 8;

  std::uint32_t format = 0;
  if (color) format |= PNG_FORMAT_FLAG_COLOR;
  if (alpha) format |= PNG_FORMAT_FLAG_ALPHA;
  const std::size_t count = out.width * out.height * out.channels;
  out.samples.resize(count);
  if (wide) {
    // 16-bit data is read without gamma conversion.
    image.format = format | PNG_FORMAT_FLAG_LINEAR;
    if (!png_image_finish_read(&image, nullptr, out.samples.data(), 0, nullptr)) {
      fail(image, "bad 16-bit image data");
    }
  } else {
    image.format = format;
    std::vector<std::uint8_t> narrow(count);
    if (!png_image_finish_read(&image, nullptr, narrow.data(), 0, nullptr)) {
      fail(image, "bad image data");
    }
    std::copy(narrow.begin(), narrow.end(), out.samples.begin());
  }
  return out;
}

RasterImage decode_raster(std::span<const std::uint8_t> bytes) {
  DecodedPng png = decode(bytes);
  const std::size_t colors = png.channels >= 3 ? 3 : 1;
  const bool alpha = png.channels == 2 || png.channels == 4;
  const double full = png.bit_depth == 16 ? 65535.0 : 255.0;
  RasterImage out(png.width, png.height, colors, std::uint8_t{0});
  for (std::size_t p = 0; p < png.width * png.height; ++p) {
    const std::uint16_t* px = &png.samples[p * png.channels];
    const double a = alpha ? px[png.channels - 1] / full : 1.0;
    for (std::size_t c = 0; c < colors; ++c) {
      const double v = px[c] / full * a * 255.0;
      out.samples[p * colors + c] = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode(const RasterImage& image) {
  image.validate();
  const std::size_t stride = image.width * image.channels;
  std::vector<std::uint8_t> scanlines;
  scanlines.reserve((stride + 1) * image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    scanlines.push_back(0);
    const auto row = image.samples.begin() + static_cast<std::ptrdiff_t>(y * stride);
    scanlines.insert(scanlines.end(), row, row + static_cast<std::ptrdiff_t>(stride));
  }
  const int color_type = image.channels == 3 ? 2 : 0;
  return assemble(image.width, image.height, 8, color_type, scanlines);
}

std::vector<std::uint8_t> encode_gray16(std::size_t width, std::size_t height,
                                        std::span<const std::uint16_t> samples) {
  if (width == 0 || height == 0 || samples.size() != width * height) {
    throw Error(ErrorKind::Dimension, "encode_gray16: sample count does not match dimensions");
  }
  std::vector<std::uint8_t> scanlines;
  scanlines.reserve((width * 2 + 1) * height);
  for (std::size_t y = 0; y < height; ++y) {
    scanlines.push_back(0);
    for (std::size_t x = 0; x < width; ++x) {
      const std::uint16_t v = samples[y * width + x];
      scanlines.push_back(static_cast<std::uint8_t>(v >> 8));
      scanlines.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
  }
  return assemble(width, height, 16, 0, scanlines);
}

}  // namespace maskjudge::png
