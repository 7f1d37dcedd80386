#include "maskjudge/judge.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdlib>

#include "maskjudge/codec.hpp"
#include "maskjudge/error.hpp"
#include "maskjudge/http.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/png_io.hpp"

namespace maskjudge::judge {
namespace {

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string reply_text(const nlohmann::json& doc) {
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw Error(ErrorKind::Protocol, "chat response has no choices");
  }
  const auto& msg = doc["choices"][0].value("message", nlohmann::json::object());
  if (!msg.contains("content")) throw Error(ErrorKind::Protocol, "chat response has no message content");
  const auto& content = msg["content"];
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") out += part.value("text", "");
    }
    return out;
  }
  throw Error(ErrorKind::Protocol, "chat response content is neither text nor parts");
}

}  // namespace

void VlmConfig::validate() const {
  if (endpoint.empty()) throw Error(ErrorKind::Validation, "vlm endpoint is empty");
  if (requests_per_minute < 1) throw Error(ErrorKind::Validation, "requests_per_minute must be >= 1");
  if (!(temperature >= 0.0)) throw Error(ErrorKind::Validation, "temperature must be >= 0");
  if (max_retries < 0) throw Error(ErrorKind::Validation, "max_retries must be >= 0");
  if (model_name.empty()) throw Error(ErrorKind::Validation, "model name is empty");
  if (timeout.count() <= 0 || rate_window.count() <= 0 || backoff_base.count() < 0) {
    throw Error(ErrorKind::Validation, "vlm timeout and rate window must be positive");
  }
  http::Endpoint::parse(endpoint);
}

AssessmentCache::AssessmentCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string AssessmentCache::key(std::string_view prompt, std::span<const std::uint8_t> image_bytes,
                                 std::string_view model_name, double temperature) {
  // Each field is length-prefixed so adjacent fields cannot run together.
  codec::Sha256 h;
  auto field = [&h](std::span<const std::uint8_t> bytes) {
    h.update(std::to_string(bytes.size()) + ":");
    h.update(bytes);
  };
  auto text = [&field](std::string_view s) {
    field(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  text(prompt);
  field(image_bytes);
  text(model_name);
  text(shortest(temperature));
  return h.hex_digest();
}

std::filesystem::path AssessmentCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<VlmAssessment> AssessmentCache::load(const std::string& key) const {
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  nlohmann::json doc = nlohmann::json::parse(io::read_text(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  try {
    VlmAssessment a;
    a.raw = doc.at("raw").get<std::string>();
    a.evaluation = doc.at("evaluation").get<std::string>();
    a.justification = doc.at("justification").get<std::string>();
    a.score = doc.at("score").get<int>();
    a.model_name = doc.at("model_name").get<std::string>();
    return a;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

void AssessmentCache::store(const std::string& key, const VlmAssessment& a) const {
  const nlohmann::json doc{{"raw", a.raw},
                           {"evaluation", a.evaluation},
                           {"justification", a.justification},
                           {"score", a.score},
                           {"model_name", a.model_name},
                           {"created_at", codec::utc_now_iso8601()}};
  io::write_atomic(path_for(key), doc.dump(2));
}

VlmJudge::VlmJudge(VlmConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      limiter_(static_cast<std::size_t>(cfg_.requests_per_minute), cfg_.rate_window) {
  if (!cfg_.cache_dir.empty()) cache_.emplace(cfg_.cache_dir);
}

VlmAssessment VlmJudge::request_assessment(const std::string& prompt, const MaskedImage& image) {
  return request_assessment_png(prompt, png::encode(image.image));
}

VlmAssessment VlmJudge::request_assessment_png(const std::string& prompt,
                                               std::span<const std::uint8_t> png_bytes) {
  std::string key;
  if (cache_) {
    key = AssessmentCache::key(prompt, png_bytes, cfg_.model_name, cfg_.temperature);
    if (auto hit = cache_->load(key)) {
      cache_hits_.fetch_add(1);
      return *hit;
    }
  }

  std::string api_key;
  if (const char* env = std::getenv(cfg_.api_key_env.c_str()); env != nullptr) api_key = env;
  if (api_key.empty() && cfg_.require_api_key) {
    throw Error(ErrorKind::Credential, "API key variable " + cfg_.api_key_env + " is not set");
  }

  const std::string data_url = "data:image/png;base64," + codec::base64_encode(png_bytes);
  const std::string first = chat(prompt, data_url, api_key);
  VlmAssessment result;
  try {
    result = parse_assessment(first);
  } catch (const ParseError&) {
    reprompts_.fetch_add(1);
    const std::string second = chat(prompt + "\n\n" + std::string(kReprompt), data_url, api_key);
    try {
      result = parse_assessment(second);
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (after one reprompt)", second);
    }
  }
  result.model_name = cfg_.model_name;
  if (cache_) cache_->store(key, result);
  return result;
}

std::string VlmJudge::chat(const std::string& prompt, const std::string& data_url,
                           const std::string& api_key) {
  const nlohmann::json body{
      {"model", cfg_.model_name},
      {"temperature", cfg_.temperature},
      {"messages",
       nlohmann::json::array(
           {{{"role", "user"},
             {"content", nlohmann::json::array({{{"type", "text"}, {"text", prompt}},
                                                {{"type", "image_url"},
                                                 {"image_url", {{"url", data_url}}}}})}}})}};
  const std::string payload = body.dump();
  const http::Endpoint endpoint = http::Endpoint::parse(cfg_.endpoint);
  http::RequestOptions options;
  options.timeout = cfg_.timeout;
  if (!api_key.empty()) options.headers.emplace_back("Authorization", "Bearer " + api_key);

  std::string text;
  http::with_retries(http::RetryPolicy{cfg_.max_retries, cfg_.backoff_base}, [&] {
    limiter_.acquire();
    network_requests_.fetch_add(1);
    const http::Response resp = http::post_json(endpoint, "/chat/completions", payload, options);
    if (resp.status == 401 || resp.status == 403) {
      throw Error(ErrorKind::Credential, "VLM endpoint rejected credentials (HTTP " +
                                             std::to_string(resp.status) + ")");
    }
    if (resp.status == 429) throw Error(ErrorKind::RateLimit, "VLM endpoint rate limited the request (HTTP 429)");
    if (resp.status >= 500) {
      throw Error(ErrorKind::Transport, "VLM endpoint failed with HTTP " + std::to_string(resp.status));
    }
    if (resp.status != 200) {
      throw Error(ErrorKind::Protocol, "VLM endpoint returned HTTP " + std::to_string(resp.status));
    }
    const nlohmann::json doc = nlohmann::json::parse(resp.body, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorKind::Protocol, "VLM response is not JSON");
    text = reply_text(doc);
  });
  return text;
}

}  // namespace maskjudge::judge
