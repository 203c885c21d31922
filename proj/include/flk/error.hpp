#pragma once

#include <stdexcept>
#include <string>

namespace flk {

enum class ErrorCode {
  unreadable,          // missing, truncated or malformed file
  unsupported_format,  // well-formed but not a bit depth / layout we handle
  zero_size,
  unwritable,
  invalid_argument,
  singular,
  non_finite,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::unreadable: return "unreadable";
    case ErrorCode::unsupported_format: return "unsupported format";
    case ErrorCode::zero_size: return "zero size";
    case ErrorCode::unwritable: return "unwritable";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::singular: return "singular";
    case ErrorCode::non_finite: return "non-finite";
  }
  return "unknown";
}

}  // namespace flk
