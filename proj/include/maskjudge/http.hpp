#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace maskjudge::http {

/// "https://api.example.com/v1" splits into the origin and "/v1".
struct Endpoint {
  std::string origin;
  std::string base_path;

  static Endpoint parse(std::string_view url);
  std::string url(std::string_view path) const;
};

struct Response {
  int status = 0;
  std::string body;
};

struct RequestOptions {
  std::chrono::milliseconds timeout{30000};
  std::vector<std::pair<std::string, std::string>> headers;
};

/// POSTs a JSON body. Connection failures and timeouts throw a Transport
/// error; any HTTP status is returned to the caller.
Response post_json(const Endpoint& endpoint, std::string_view path, const std::string& body,
                   const RequestOptions& options);

/// Exponential backoff: base, 2*base, 4*base, ...
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{1000};

  std::chrono::milliseconds delay_for(int retry_index) const;
  std::string schedule() const;
};

/// Runs `attempt` until it succeeds, retrying retryable maskjudge::Error
/// failures up to policy.max_retries times. `on_retry` sees each retry index
/// and the error that caused it. The final failure is rethrown with the
/// backoff schedule appended.
void with_retries(const RetryPolicy& policy, const std::function<void()>& attempt,
                  const std::function<void(int, const std::exception&)>& on_retry = {});

}  // namespace maskjudge::http
