#include "maskjudge/occlusion.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <tuple>
#include <exception>
#include <random>
#include <thread>

#include "maskjudge/codec.hpp"
#include "maskjudge/error.hpp"
#include "maskjudge/png_io.hpp"
#include "maskjudge/saliency.hpp"

namespace maskjudge {
namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per mask index; std::mt19937_64 output is fixed by the
// standard, unlike the std distributions, so only raw draws are used.
std::mt19937_64 stream_for(std::uint64_t seed, std::size_t mask_index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(mask_index))));
}

double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

void OcclusionConfig::validate() const {
  if (num_masks < 1) throw Error(ErrorKind::Validation, "num_masks must be >= 1");
  if (!(keep_prob > 0.0 && keep_prob < 1.0)) {
    throw Error(ErrorKind::Validation, "keep_prob must lie in (0,1)");
  }
  if (grid_width < 1 || grid_height < 1) throw Error(ErrorKind::Validation, "cell grid must be at least 1x1");
  if (max_in_flight < 1) throw Error(ErrorKind::Validation, "max_in_flight must be >= 1");
}

std::optional<double> Prediction::probability_of(std::string_view label) const {
  for (const auto& [name, p] : scores) {
    if (name == label) return p;
  }
  return std::nullopt;
}

Prediction parse_prediction(std::string_view body) {
  nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("scores") || !doc["scores"].is_array()) {
    throw Error(ErrorKind::Protocol, "prediction response must be an object with a 'scores' array");
  }
  Prediction out;
  for (const auto& entry : doc["scores"]) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() || !entry[1].is_number()) {
      throw Error(ErrorKind::Protocol, "each score must be a [label, probability] pair");
    }
    const double p = entry[1].get<double>();
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::Protocol, "probability " + std::to_string(p) + " is outside [0,1]");
    }
    out.scores.emplace_back(entry[0].get<std::string>(), p);
  }
  if (out.scores.empty()) throw Error(ErrorKind::Protocol, "prediction response has an empty score list");
  std::stable_sort(out.scores.begin(), out.scores.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

HttpPredictionBackend::HttpPredictionBackend(std::string endpoint)
    : HttpPredictionBackend(std::move(endpoint), Options{}) {}

HttpPredictionBackend::HttpPredictionBackend(std::string endpoint, Options options)
    : endpoint_(http::Endpoint::parse(endpoint)), options_(options) {}

Prediction HttpPredictionBackend::predict(const RasterImage& image) {
  const std::vector<std::uint8_t> png_bytes = png::encode(image);
  const std::string body = nlohmann::json{{"image_b64", codec::base64_encode(png_bytes)}}.dump();
  http::RequestOptions req;
  req.timeout = options_.timeout;
  Prediction result;
  queries_.fetch_add(1);
  http::with_retries(
      options_.retry,
      [&] {
        const http::Response resp = http::post_json(endpoint_, "/predict", body, req);
        if (resp.status != 200) {
          throw Error(ErrorKind::Transport, "prediction backend returned HTTP " + std::to_string(resp.status));
        }
        result = parse_prediction(resp.body);
      },
      [&](int retry, const std::exception& e) {
        retries_.fetch_add(1);
        std::lock_guard lock(log_mutex_);
        retry_log_.push_back("retry " + std::to_string(retry + 1) + ": " + e.what());
      });
  return result;
}

std::vector<std::string> HttpPredictionBackend::retry_log() const {
  std::lock_guard lock(log_mutex_);
  return retry_log_;
}

Prediction backend_predict(const std::string& endpoint, const RasterImage& image) {
  HttpPredictionBackend backend(endpoint);
  return backend.predict(image);
}

std::vector<double> occlusion_mask(const OcclusionConfig& cfg, std::size_t mask_index,
                                   std::size_t width, std::size_t height) {
  std::mt19937_64 rng = stream_for(cfg.seed, mask_index);
  const std::size_t gw = cfg.grid_width;
  const std::size_t gh = cfg.grid_height;
  std::vector<double> cells(gw * gh);
  for (double& c : cells) c = unit_draw(rng) < cfg.keep_prob ? 1.0 : 0.0;

  const std::size_t cell_w = (width + gw - 1) / gw;
  const std::size_t cell_h = (height + gh - 1) / gh;
  const std::size_t shift_x = static_cast<std::size_t>(rng() % cell_w);
  const std::size_t shift_y = static_cast<std::size_t>(rng() % cell_h);

  auto axis = [](std::size_t pixel, std::size_t cell, std::size_t cells_n) {
    // Pixel centers of the (cells_n + 1) * cell upsampled canvas mapped to
    // cell-center coordinates, clamped at the border.
    double g = (static_cast<double>(pixel) + 0.5) / static_cast<double>(cell) - 0.5;
    g = std::clamp(g, 0.0, static_cast<double>(cells_n - 1));
    const std::size_t i0 = static_cast<std::size_t>(g);
    const std::size_t i1 = std::min(i0 + 1, cells_n - 1);
    return std::tuple{i0, i1, g - static_cast<double>(i0)};
  };

  std::vector<double> mask(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    const auto [y0, y1, wy] = axis(y + shift_y, cell_h, gh);
    for (std::size_t x = 0; x < width; ++x) {
      const auto [x0, x1, wx] = axis(x + shift_x, cell_w, gw);
      const double top = cells[y0 * gw + x0] * (1.0 - wx) + cells[y0 * gw + x1] * wx;
      const double bottom = cells[y1 * gw + x0] * (1.0 - wx) + cells[y1 * gw + x1] * wx;
      mask[y * width + x] = std::clamp(top * (1.0 - wy) + bottom * wy, 0.0, 1.0);
    }
  }
  return mask;
}

AttentionMap generate_occlusion_map(const RasterImage& image, const std::string& target_label,
                                    PredictionBackend& backend, const OcclusionConfig& cfg) {
  cfg.validate();
  image.validate();
  const std::size_t w = image.width;
  const std::size_t h = image.height;

  auto probability = [&](const RasterImage& probe, std::size_t index) {
    const Prediction pred = backend.predict(probe);
    const auto p = pred.probability_of(target_label);
    if (!p) {
      throw Error(ErrorKind::Label, "backend did not return label '" + target_label +
                                        "' for mask " + std::to_string(index));
    }
    return *p;
  };

  double baseline = 0.0;
  if (cfg.subtract_baseline) {
    baseline = probability(RasterImage(w, h, image.channels, std::uint8_t{0}), cfg.num_masks);
  }

  std::vector<double> scores(cfg.num_masks, 0.0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  std::size_t failed_index = 0;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.num_masks) return;
      try {
        const RasterImage probe = multiply_weights(image, occlusion_mask(cfg, i, w, h));
        scores[i] = probability(probe, i) - baseline;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure || i < failed_index) {
          failure = std::current_exception();
          failed_index = i;
        }
        stop.store(true);
      }
    }
  };
  {
    const std::size_t threads = std::min(cfg.max_in_flight, cfg.num_masks);
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Label) throw;
      throw Error(e.kind(), "occlusion mask " + std::to_string(failed_index) + ": " + e.what());
    }
  }

  // Summed in index order so the result does not depend on completion order.
  std::vector<double> saliency(w * h, 0.0);
  for (std::size_t i = 0; i < cfg.num_masks; ++i) {
    const std::vector<double> mask = occlusion_mask(cfg, i, w, h);
    for (std::size_t p = 0; p < saliency.size(); ++p) saliency[p] += scores[i] * mask[p];
  }
  return normalize_map(w, h, saliency, NormalizeMode::MinMax);
}

}  // namespace maskjudge
