#include "maskjudge/saliency.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/png_io.hpp"

namespace maskjudge {
namespace {

void check_dims(std::size_t width, std::size_t height, std::size_t count, const char* what) {
  if (width == 0 || height == 0) {
    throw Error(ErrorKind::Dimension, std::string(what) + ": width and height must be positive");
  }
  if (count != width * height) {
    throw Error(ErrorKind::Dimension, std::string(what) + ": expected " +
                                          std::to_string(width * height) + " values, got " +
                                          std::to_string(count));
  }
}

std::string position(std::size_t index, std::size_t width) {
  return "(" + std::to_string(index % width) + "," + std::to_string(index / width) + ")";
}

}  // namespace

AttentionMap::AttentionMap(std::size_t width, std::size_t height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  check_dims(width_, height_, values_.size(), "attention map");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorKind::Range, "attention value " + std::to_string(v) + " at " +
                                        position(i, width_) + " is outside [0,1]");
    }
  }
}

Mask::Mask(std::size_t width, std::size_t height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  check_dims(width_, height_, values_.size(), "mask");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0 && values_[i] <= 1.0)) {
      throw Error(ErrorKind::Range, "mask value at " + position(i, width_) + " is outside [0,1]");
    }
  }
}

void MaskParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorKind::Validation, "alpha must be a finite value > 0, got " + std::to_string(alpha));
  }
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw Error(ErrorKind::Validation, "beta must lie in [0,1], got " + std::to_string(beta));
  }
}

RasterImage::RasterImage(std::size_t w, std::size_t h, std::size_t c, std::vector<std::uint8_t> s)
    : width(w), height(h), channels(c), samples(std::move(s)) {
  validate();
}

RasterImage::RasterImage(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill)
    : width(w), height(h), channels(c), samples(w * h * c, fill) {
  validate();
}

void RasterImage::validate() const {
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::Dimension, "image must have 1 or 3 channels, got " + std::to_string(channels));
  }
  check_dims(width, height, samples.size() / channels, "image");
  if (samples.size() != width * height * channels) {
    throw Error(ErrorKind::Dimension, "image sample count does not match width*height*channels");
  }
}

AttentionMap normalize_map(std::size_t width, std::size_t height, std::span<const double> raw,
                           NormalizeMode mode) {
  if (raw.empty()) throw Error(ErrorKind::Dimension, "attention map is empty");
  check_dims(width, height, raw.size(), "attention map");
  std::vector<double> values(raw.begin(), raw.end());
  if (mode == NormalizeMode::Passthrough) {
    return AttentionMap(width, height, std::move(values));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorKind::Range, "non-finite attention value at " + position(i, width));
    }
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double span = *hi - *lo;
  if (span == 0.0) {
    std::fill(values.begin(), values.end(), 0.0);
  } else {
    for (double& v : values) v = std::clamp((v - min) / span, 0.0, 1.0);
  }
  return AttentionMap(width, height, std::move(values));
}

double activate(double v, const MaskParams& params) noexcept {
  return 1.0 / (1.0 + std::exp(params.alpha * (params.beta - v)));
}

Mask activate_mask(const AttentionMap& map, const MaskParams& params) {
  params.validate();
  std::vector<double> out(map.values().size());
  std::transform(map.values().begin(), map.values().end(), out.begin(),
                 [&](double v) { return activate(v, params); });
  return Mask(map.width(), map.height(), std::move(out));
}

RasterImage multiply_weights(const RasterImage& image, std::span<const double> weights) {
  image.validate();
  if (weights.size() != image.width * image.height) {
    throw Error(ErrorKind::Dimension, "mask has " + std::to_string(weights.size()) +
                                          " values but image has " +
                                          std::to_string(image.width * image.height) + " pixels");
  }
  RasterImage out = image;
  const std::size_t c = image.channels;
  for (std::size_t p = 0; p < weights.size(); ++p) {
    const double m = weights[p];
    for (std::size_t k = 0; k < c; ++k) {
      // std::round rounds halfway cases away from zero.
      const double a = std::round(static_cast<double>(image.samples[p * c + k]) * m);
      out.samples[p * c + k] = static_cast<std::uint8_t>(std::clamp(a, 0.0, 255.0));
    }
  }
  return out;
}

MaskedImage apply_mask(const RasterImage& image, const Mask& mask) {
  if (image.width != mask.width() || image.height != mask.height()) {
    throw Error(ErrorKind::Dimension,
                "image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    " but mask is " + std::to_string(mask.width()) + "x" +
                    std::to_string(mask.height()));
  }
  return MaskedImage{multiply_weights(image, mask.values())};
}

AttentionMap parse_float_grid(std::string_view text) {
  const char* p = text.data();
  const char* end = text.data() + text.size();
  auto skip_ws = [&] {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\n' || *p == '\r')) ++p;
  };
  auto next_size = [&](const char* what) {
    skip_ws();
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{}) throw Error(ErrorKind::Decode, std::string("float-grid: bad ") + what);
    p = ptr;
    return v;
  };
  const std::size_t width = next_size("width");
  const std::size_t height = next_size("height");
  if (width == 0 || height == 0) throw Error(ErrorKind::Decode, "float-grid: zero dimension");
  std::vector<double> values;
  values.reserve(width * height);
  while (true) {
    skip_ws();
    if (p == end) break;
    double v = 0;
    auto [ptr, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{}) {
      throw Error(ErrorKind::Decode,
                  "float-grid: bad number at value index " + std::to_string(values.size()));
    }
    values.push_back(v);
    p = ptr;
  }
  if (values.size() != width * height) {
    throw Error(ErrorKind::Decode, "float-grid: expected " + std::to_string(width * height) +
                                       " values, found " + std::to_string(values.size()));
  }
  try {
    return normalize_map(width, height, values, NormalizeMode::Passthrough);
  } catch (const Error& e) {
    throw Error(ErrorKind::Decode, std::string("float-grid: ") + e.what());
  }
}

std::string format_float_grid(const AttentionMap& map) {
  std::string out = std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n";
  char buf[32];
  for (std::size_t y = 0; y < map.height(); ++y) {
    for (std::size_t x = 0; x < map.width(); ++x) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), map.at(x, y));
      out.append(buf, ptr);
      out.push_back(x + 1 == map.width() ? '\n' : ' ');
    }
  }
  return out;
}

AttentionMap load_attention_map(std::span<const std::uint8_t> bytes, MapFormat format) {
  if (format == MapFormat::FloatGrid) {
    return parse_float_grid(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  png::DecodedPng decoded = png::decode(bytes);
  if (decoded.channels != 1) {
    throw Error(ErrorKind::Decode, "attention map PNG must be single-channel gray, found " +
                                       std::to_string(decoded.channels) + " channels");
  }
  const double full = decoded.bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<double> values(decoded.samples.size());
  std::transform(decoded.samples.begin(), decoded.samples.end(), values.begin(),
                 [full](std::uint16_t p) { return p / full; });
  return AttentionMap(decoded.width, decoded.height, std::move(values));
}

AttentionMap load_attention_map_file(const std::string& path) {
  const std::vector<std::uint8_t> bytes = io::read_bytes(path);
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return load_attention_map(bytes, ext == ".png" ? MapFormat::GrayPng : MapFormat::FloatGrid);
}

AttentionMap resize_map(const AttentionMap& map, std::size_t target_width, std::size_t target_height) {
  if (target_width == 0 || target_height == 0) {
    throw Error(ErrorKind::Dimension, "resize target must be positive");
  }
  if (target_width == map.width() && target_height == map.height()) return map;

  auto scale = [](std::size_t src, std::size_t dst) {
    return dst > 1 ? static_cast<double>(src - 1) / static_cast<double>(dst - 1) : 0.0;
  };
  const double sx = scale(map.width(), target_width);
  const double sy = scale(map.height(), target_height);
  std::vector<double> out(target_width * target_height);
  for (std::size_t y = 0; y < target_height; ++y) {
    const double fy = static_cast<double>(y) * sy;
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), map.height() - 1);
    const std::size_t y1 = std::min(y0 + 1, map.height() - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target_width; ++x) {
      const double fx = static_cast<double>(x) * sx;
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), map.width() - 1);
      const std::size_t x1 = std::min(x0 + 1, map.width() - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = map.at(x0, y0) * (1.0 - wx) + map.at(x1, y0) * wx;
      const double bottom = map.at(x0, y1) * (1.0 - wx) + map.at(x1, y1) * wx;
      out[y * target_width + x] = std::clamp(top * (1.0 - wy) + bottom * wy, 0.0, 1.0);
    }
  }
  return AttentionMap(target_width, target_height, std::move(out));
}

std::vector<std::uint8_t> encode_map_png(const AttentionMap& map) {
  std::vector<std::uint16_t> samples(map.values().size());
  std::transform(map.values().begin(), map.values().end(), samples.begin(),
                 [](double v) { return static_cast<std::uint16_t>(std::lround(v * 65535.0)); });
  return png::encode_gray16(map.width(), map.height(), samples);
}

}  // namespace maskjudge
