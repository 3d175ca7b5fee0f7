#pragma once

#include <stdexcept>
#include <string>

namespace rlmlab {

enum class ErrorCode {
  invalid_argument,
  validation,
  io,
  parse,
  numeric,
  infeasible_split,
  non_terminating,
  training_diverged,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::validation: return "validation";
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::infeasible_split: return "infeasible_split";
    case ErrorCode::non_terminating: return "non_terminating";
    case ErrorCode::training_diverged: return "training_diverged";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace rlmlab
