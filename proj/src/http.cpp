#include "maskjudge/http.hpp"

#include <httplib.h>

#include <thread>

#include "maskjudge/error.hpp"

namespace maskjudge::http {

Endpoint Endpoint::parse(std::string_view url) {
  while (!url.empty() && url.back() == '/') url.remove_suffix(1);
  const auto scheme_end = url.find("://");
  if (url.empty() || scheme_end == std::string_view::npos) {
    throw Error(ErrorKind::Validation, "endpoint must be an absolute http(s) URL, got '" +
                                           std::string(url) + "'");
  }
  const std::string_view scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorKind::Validation, "unsupported URL scheme '" + std::string(scheme) + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) e.base_path = std::string(url.substr(path_start));
  return e;
}

std::string Endpoint::url(std::string_view path) const {
  return origin + base_path + std::string(path);
}

Response post_json(const Endpoint& endpoint, std::string_view path, const std::string& body,
                   const RequestOptions& options) {
  httplib::Client client(endpoint.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  for (const auto& [k, v] : options.headers) headers.emplace(k, v);
  const std::string full_path = endpoint.base_path + std::string(path);
  auto result = client.Post(full_path, headers, body, "application/json");
  if (!result) {
    throw Error(ErrorKind::Transport,
                "POST " + endpoint.url(path) + " failed: " + httplib::to_string(result.error()));
  }
  return Response{result->status, result->body};
}

std::chrono::milliseconds RetryPolicy::delay_for(int retry_index) const {
  return base_delay * (1LL << std::min(retry_index, 20));
}

std::string RetryPolicy::schedule() const {
  std::string out;
  for (int i = 0; i < max_retries; ++i) {
    if (i) out += ", ";
    out += std::to_string(delay_for(i).count()) + "ms";
  }
  return out.empty() ? "none" : out;
}

void with_retries(const RetryPolicy& policy, const std::function<void()>& attempt,
                  const std::function<void(int, const std::exception&)>& on_retry) {
  for (int retry = 0;; ++retry) {
    try {
      attempt();
      return;
    } catch (const Error& e) {
      if (!e.retryable()) throw;
      if (retry >= policy.max_retries) {
        throw Error(e.kind(), std::string(e.what()) + " (gave up after " +
                                  std::to_string(policy.max_retries) +
                                  " retries; backoff schedule: " + policy.schedule() + ")");
      }
      if (on_retry) on_retry(retry, e);
      std::this_thread::sleep_for(policy.delay_for(retry));
    }
  }
}

}  // namespace maskjudge::http
