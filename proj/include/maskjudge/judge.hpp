#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "maskjudge/image.hpp"
#include "maskjudge/rate_limiter.hpp"

namespace maskjudge::judge {

inline constexpr std::string_view kPlaceholder = "{object}";
inline constexpr std::string_view kReprompt = "Respond strictly in the required format.";

enum class PromptVariant { Masked, Heatmap };

struct PromptTemplate {
  PromptVariant variant = PromptVariant::Masked;
  std::string body;

  /// Throws Validation when the body has no {object} placeholder.
  void validate() const;
};

/// The shipped templates: one for masked images, one for heatmap overlays.
const PromptTemplate& builtin_template(PromptVariant variant);
PromptTemplate load_template_file(const std::filesystem::path& path,
                                  PromptVariant variant = PromptVariant::Masked);

/// Replaces every {object} with the trimmed label in a single pass; braces
/// in the label are copied literally.
std::string build_prompt(const PromptTemplate& tmpl, std::string_view object_label);

struct VlmAssessment {
  std::string evaluation;
  std::string justification;
  int score = 0;
  std::string raw;
  std::string model_name;

  bool operator==(const VlmAssessment&) const = default;
};

/// Extracts Evaluation / Justification / Score from a judge reply. Accepts
/// the plain `Label: value` layout, dictionary-like or JSON objects,
/// bulleted and markdown-emphasized lines, and fenced code blocks.
VlmAssessment parse_assessment(std::string_view raw);

/// Canonical three-line layout understood by parse_assessment.
std::string format_assessment(const VlmAssessment& a);

struct VlmConfig {
  std::string endpoint;
  std::string model_name = "gpt-4o-mini";
  std::string api_key_env = "VLM_API_KEY";
  double temperature = 0.0;
  int max_retries = 3;
  int requests_per_minute = 60;
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds backoff_base{1000};
  /// Length of the rate-limit window; one minute outside of tests.
  std::chrono::milliseconds rate_window{60000};
  std::string cache_dir;  // empty disables caching
  bool require_api_key = true;

  void validate() const;
};

/// Content-addressed reply cache: <dir>/<first 2 hex>/<sha256>.json.
class AssessmentCache {
 public:
  explicit AssessmentCache(std::filesystem::path dir);

  static std::string key(std::string_view prompt, std::span<const std::uint8_t> image_bytes,
                         std::string_view model_name, double temperature);
  std::filesystem::path path_for(const std::string& key) const;
  std::optional<VlmAssessment> load(const std::string& key) const;
  void store(const std::string& key, const VlmAssessment& a) const;

 private:
  std::filesystem::path dir_;
};

/// Client for an OpenAI-compatible chat-completions endpoint. Thread-safe;
/// all requests share one rate limiter.
class VlmJudge {
 public:
  explicit VlmJudge(VlmConfig cfg);

  VlmAssessment request_assessment(const std::string& prompt, const MaskedImage& image);
  /// Same as above for an already encoded PNG, e.g. a heatmap overlay file.
  VlmAssessment request_assessment_png(const std::string& prompt,
                                       std::span<const std::uint8_t> png_bytes);

  const VlmConfig& config() const noexcept { return cfg_; }
  std::uint64_t network_requests() const noexcept { return network_requests_.load(); }
  std::uint64_t cache_hits() const noexcept { return cache_hits_.load(); }
  std::uint64_t reprompts() const noexcept { return reprompts_.load(); }

 private:
  std::string chat(const std::string& prompt, const std::string& data_url, const std::string& api_key);

  VlmConfig cfg_;
  RateLimiter limiter_;
  std::optional<AssessmentCache> cache_;
  std::atomic<std::uint64_t> network_requests_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> reprompts_{0};
};

}  // namespace maskjudge::judge
