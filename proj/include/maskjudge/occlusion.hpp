#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maskjudge/http.hpp"
#include "maskjudge/image.hpp"

namespace maskjudge {

/// Randomized-occlusion saliency settings.
struct OcclusionConfig {
  std::size_t num_masks = 1000;
  std::size_t grid_width = 7;
  std::size_t grid_height = 7;
  double keep_prob = 0.5;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
  /// Weight masks by (p - p_blank) where p_blank is the target probability
  /// on a fully occluded image. Off by default.
  bool subtract_baseline = false;

  void validate() const;
};

/// Class scores from a prediction backend, sorted by descending probability.
struct Prediction {
  std::vector<std::pair<std::string, double>> scores;

  const std::string& top_label() const { return scores.front().first; }
  std::optional<double> probability_of(std::string_view label) const;
};

/// Parses {"scores": [["label", p], ...]}; throws Protocol on bad bodies or
/// an empty list.
Prediction parse_prediction(std::string_view body);

class PredictionBackend {
 public:
  virtual ~PredictionBackend() = default;
  virtual Prediction predict(const RasterImage& image) = 0;
};

/// Backend reached over the JSON prediction protocol:
/// POST {endpoint}/predict with {"image_b64": "<base64 PNG>"}.
class HttpPredictionBackend final : public PredictionBackend {
 public:
  struct Options {
    std::chrono::milliseconds timeout{30000};
    http::RetryPolicy retry{};
  };

  explicit HttpPredictionBackend(std::string endpoint);
  HttpPredictionBackend(std::string endpoint, Options options);

  Prediction predict(const RasterImage& image) override;

  std::uint64_t queries() const noexcept { return queries_.load(); }
  std::uint64_t retries() const noexcept { return retries_.load(); }
  /// One entry per retry: "retry <n>: <reason>".
  std::vector<std::string> retry_log() const;

 private:
  http::Endpoint endpoint_;
  Options options_;
  std::atomic<std::uint64_t> queries_{0};
  std::atomic<std::uint64_t> retries_{0};
  mutable std::mutex log_mutex_;
  std::vector<std::string> retry_log_;
};

/// Convenience wrapper for a single prediction request.
Prediction backend_predict(const std::string& endpoint, const RasterImage& image);

/// Deterministic occlusion mask for index `mask_index`: a binary cell grid
/// drawn from the seeded generator, upsampled bilinearly with a random
/// sub-cell shift and cropped to width x height. Values in [0,1].
std::vector<double> occlusion_mask(const OcclusionConfig& cfg, std::size_t mask_index,
                                   std::size_t width, std::size_t height);

/// Saliency S = sum_i p_i * mask_i, min-max normalized. Queries the backend
/// exactly cfg.num_masks times (plus one when subtract_baseline is set).
AttentionMap generate_occlusion_map(const RasterImage& image, const std::string& target_label,
                                    PredictionBackend& backend, const OcclusionConfig& cfg);

}  // namespace maskjudge
