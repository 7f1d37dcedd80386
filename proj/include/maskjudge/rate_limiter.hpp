#pragma once

#include <chrono>
#include <cstddef>
#include <deque>
#include <mutex>

namespace maskjudge {

/// Sliding-window limiter: at most `max_events` acquisitions inside any
/// window of length `window`. Blocks the caller until a slot frees up.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;

  RateLimiter(std::size_t max_events, Clock::duration window);

  void acquire();

 private:
  std::size_t max_events_;
  Clock::duration window_;
  std::mutex mutex_;
  std::deque<Clock::time_point> events_;
};

}  // namespace maskjudge
