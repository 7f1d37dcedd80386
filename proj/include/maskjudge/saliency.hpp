#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maskjudge/image.hpp"

namespace maskjudge {

enum class NormalizeMode { Passthrough, MinMax };
enum class MapFormat { GrayPng, FloatGrid };

/// Builds an AttentionMap from raw values. MinMax maps a constant grid to
/// all zeros, so an uninformative map hides everything.
AttentionMap normalize_map(std::size_t width, std::size_t height, std::span<const double> raw,
                           NormalizeMode mode);

/// M = 1 / (1 + exp(alpha * (beta - v))), elementwise.
Mask activate_mask(const AttentionMap& map, const MaskParams& params);

/// Logistic activation for a single value.
double activate(double v, const MaskParams& params) noexcept;

/// A = round(I * M) per channel, ties away from zero, clamped to [0,255].
MaskedImage apply_mask(const RasterImage& image, const Mask& mask);

/// Same product as apply_mask with arbitrary weights in [0,1]; used for
/// occlusion probing where the weights are not a logistic mask.
RasterImage multiply_weights(const RasterImage& image, std::span<const double> weights);

AttentionMap load_attention_map(std::span<const std::uint8_t> bytes, MapFormat format);

/// Picks the format from the extension: .png is GrayPng, anything else
/// FloatGrid.
AttentionMap load_attention_map_file(const std::string& path);

/// Bilinear resize with corner-aligned sampling.
AttentionMap resize_map(const AttentionMap& map, std::size_t target_width, std::size_t target_height);

/// 16-bit gray PNG, v quantized to round(v * 65535).
std::vector<std::uint8_t> encode_map_png(const AttentionMap& map);

/// "W H" header followed by row-major values.
std::string format_float_grid(const AttentionMap& map);
AttentionMap parse_float_grid(std::string_view text);

}  // namespace maskjudge
