#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskjudge {

enum class ErrorKind {
  Dimension,
  Range,
  Decode,
  Validation,
  NotFound,
  Io,
  Transport,   // connection failure, timeout, non-200 from a backend
  Protocol,    // malformed response body
  Label,
  Credential,
  RateLimit,
  Parse,
  EmptySet,
  DegenerateInput,
  Precondition,
  RunFailed,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base exception for every failure raised by the library. The kind drives
/// retry decisions and CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept;

 private:
  ErrorKind kind_;
};

/// Raised when a judge reply cannot be parsed; keeps the verbatim reply.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string raw);

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

}  // namespace maskjudge
