#include "maskjudge/error.hpp"

namespace maskjudge {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Range: return "range";
    case ErrorKind::Decode: return "decode";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Io: return "io";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Label: return "label";
    case ErrorKind::Credential: return "credential";
    case ErrorKind::RateLimit: return "rate-limit";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::EmptySet: return "empty-set";
    case ErrorKind::DegenerateInput: return "degenerate-input";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::RunFailed: return "run-failed";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

bool Error::retryable() const noexcept {
  return kind_ == ErrorKind::Transport || kind_ == ErrorKind::RateLimit;
}

ParseError::ParseError(const std::string& message, std::string raw)
    : Error(ErrorKind::Parse, message), raw_(std::move(raw)) {}

}  // namespace maskjudge
