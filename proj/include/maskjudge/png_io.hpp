#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maskjudge/image.hpp"

namespace maskjudge::png {

/// Decoded PNG with samples widened to 16 bits; `bit_depth` reports the
/// file's own depth (8 or 16).
struct DecodedPng {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 gray, 2 gray+alpha, 3 RGB, 4 RGBA
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

DecodedPng decode(std::span<const std::uint8_t> bytes);

/// Decodes to an 8-bit gray or RGB raster. Alpha is composited onto black.
RasterImage decode_raster(std::span<const std::uint8_t> bytes);

/// Deterministic encoder: filter type 0 on every row and stored (uncompressed)
/// deflate blocks, so output bytes depend only on the pixels.
std::vector<std::uint8_t> encode(const RasterImage& image);
std::vector<std::uint8_t> encode_gray16(std::size_t width, std::size_t height,
                                        std::span<const std::uint16_t> samples);

}  // namespace maskjudge::png
