#include "maskjudge/rate_limiter.hpp"

#include <thread>

#include "maskjudge/error.hpp"

namespace maskjudge {

RateLimiter::RateLimiter(std::size_t max_events, Clock::duration window)
    : max_events_(max_events), window_(window) {
  if (max_events_ == 0) throw Error(ErrorKind::Validation, "rate limit must allow at least one event");
}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = Clock::now();
    while (!events_.empty() && now - events_.front() >= window_) events_.pop_front();
    if (events_.size() < max_events_) {
      events_.push_back(now);
      return;
    }
    const auto wake = events_.front() + window_;
    lock.unlock();
    std::this_thread::sleep_until(wake);
    lock.lock();
  }
}

}  // namespace maskjudge
