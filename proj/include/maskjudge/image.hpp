#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace maskjudge {

/// Per-pixel importance grid, row-major, every value in [0,1].
class AttentionMap {
 public:
  AttentionMap(std::size_t width, std::size_t height, std::vector<double> values);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::span<const double> values() const noexcept { return values_; }
  double at(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<double> values_;
};

/// Logistic activation parameters: alpha sets the steepness of the
/// transition, beta the importance cutoff.
struct MaskParams {
  double alpha = 25.0;
  double beta = 0.4;

  void validate() const;
  bool operator==(const MaskParams&) const = default;
};

/// Activated mask. Values lie in (0,1) mathematically; in double precision
/// extreme alphas can saturate to exactly 0 or 1.
class Mask {
 public:
  Mask(std::size_t width, std::size_t height, std::vector<double> values);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::span<const double> values() const noexcept { return values_; }
  double at(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<double> values_;
};

/// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels, row-major.
struct RasterImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> samples;

  RasterImage() = default;
  RasterImage(std::size_t w, std::size_t h, std::size_t c, std::vector<std::uint8_t> s);
  RasterImage(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill);

  void validate() const;
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return samples[(y * width + x) * channels + c];
  }
  bool operator==(const RasterImage&) const = default;
};

/// An image that went through apply_mask; never brighter than its source.
struct MaskedImage {
  RasterImage image;
};

}  // namespace maskjudge
