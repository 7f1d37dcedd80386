#include <charconv>
#include <functional>

#include "maskjudge/error.hpp"
#include "maskjudge/runner.hpp"

namespace maskjudge::runner {
namespace {

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw Error(ErrorKind::Validation, "config key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw Error(ErrorKind::Validation, "config key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorKind::Validation, "config key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
  mask_params.validate();
  threshold.validate();
  vlm.validate();
  if (concurrency < 1) throw Error(ErrorKind::Validation, "concurrency must be >= 1");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0)) {
    throw Error(ErrorKind::Validation, "max_failure_fraction must lie in [0,1]");
  }
  if (!occlusion_backend.empty()) occlusion.validate();
  prompt_template();
}

judge::PromptTemplate RunConfig::prompt_template() const {
  if (prompt_variant == "masked") return judge::builtin_template(judge::PromptVariant::Masked);
  if (prompt_variant == "heatmap") return judge::builtin_template(judge::PromptVariant::Heatmap);
  return judge::load_template_file(prompt_variant);
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"alpha", mask_params.alpha},
      {"beta", mask_params.beta},
      {"threshold", threshold.min_high_score},
      {"prompt_variant", prompt_variant},
      {"concurrency", concurrency},
      {"out_dir", out_dir.string()},
      {"model_label", model_label},
      {"max_failure_fraction", max_failure_fraction},
      {"vlm",
       {{"endpoint", vlm.endpoint},
        {"model", vlm.model_name},
        {"api_key_env", vlm.api_key_env},
        {"temperature", vlm.temperature},
        {"max_retries", vlm.max_retries},
        {"requests_per_minute", vlm.requests_per_minute},
        {"timeout_ms", vlm.timeout.count()},
        {"backoff_ms", vlm.backoff_base.count()},
        {"cache_dir", vlm.cache_dir}}},
      {"occlusion",
       {{"backend", occlusion_backend},
        {"num_masks", occlusion.num_masks},
        {"grid", std::to_string(occlusion.grid_width) + "x" + std::to_string(occlusion.grid_height)},
        {"keep_prob", occlusion.keep_prob},
        {"seed", occlusion.seed}}},
  };
}

void apply_config(const KeyValueConfig& file, RunConfig& cfg) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"alpha", [&](auto& k, auto& v) { cfg.mask_params.alpha = to_double(k, v); }},
      {"beta", [&](auto& k, auto& v) { cfg.mask_params.beta = to_double(k, v); }},
      {"threshold", [&](auto& k, auto& v) { cfg.threshold.min_high_score = static_cast<int>(to_int(k, v)); }},
      {"concurrency", [&](auto& k, auto& v) { cfg.concurrency = static_cast<std::size_t>(to_int(k, v)); }},
      {"prompt_variant", [&](auto&, auto& v) { cfg.prompt_variant = v; }},
      {"out_dir", [&](auto&, auto& v) { cfg.out_dir = v; }},
      {"model_label", [&](auto&, auto& v) { cfg.model_label = v; }},
      {"max_failure_fraction", [&](auto& k, auto& v) { cfg.max_failure_fraction = to_double(k, v); }},
      {"vlm.endpoint", [&](auto&, auto& v) { cfg.vlm.endpoint = v; }},
      {"vlm.model", [&](auto&, auto& v) { cfg.vlm.model_name = v; }},
      {"vlm.api_key_env", [&](auto&, auto& v) { cfg.vlm.api_key_env = v; }},
      {"vlm.temperature", [&](auto& k, auto& v) { cfg.vlm.temperature = to_double(k, v); }},
      {"vlm.max_retries", [&](auto& k, auto& v) { cfg.vlm.max_retries = static_cast<int>(to_int(k, v)); }},
      {"vlm.requests_per_minute",
       [&](auto& k, auto& v) { cfg.vlm.requests_per_minute = static_cast<int>(to_int(k, v)); }},
      {"vlm.timeout_ms", [&](auto& k, auto& v) { cfg.vlm.timeout = std::chrono::milliseconds(to_int(k, v)); }},
      {"vlm.backoff_ms",
       [&](auto& k, auto& v) { cfg.vlm.backoff_base = std::chrono::milliseconds(to_int(k, v)); }},
      {"vlm.cache_dir", [&](auto&, auto& v) { cfg.vlm.cache_dir = v; }},
      {"vlm.require_api_key", [&](auto& k, auto& v) { cfg.vlm.require_api_key = to_bool(k, v); }},
      {"occlusion.backend", [&](auto&, auto& v) { cfg.occlusion_backend = v; }},
      {"occlusion.num_masks",
       [&](auto& k, auto& v) { cfg.occlusion.num_masks = static_cast<std::size_t>(to_int(k, v)); }},
      {"occlusion.grid",
       [&](auto& k, auto& v) {
         const auto n = static_cast<std::size_t>(to_int(k, v));
         cfg.occlusion.grid_width = cfg.occlusion.grid_height = n;
       }},
      {"occlusion.keep_prob", [&](auto& k, auto& v) { cfg.occlusion.keep_prob = to_double(k, v); }},
      {"occlusion.seed",
       [&](auto& k, auto& v) { cfg.occlusion.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
  };
  for (const auto& [key, value] : file.entries()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorKind::Validation, "unknown config key '" + key + "'");
    it->second(key, value);
  }
}

}  // namespace maskjudge::runner
