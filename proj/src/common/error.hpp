#pragma once

#include <stdexcept>
#include <string>

namespace sologan {

enum class ErrorCode {
  invalid_argument,
  invalid_label,
  dimension_mismatch,
  shape_mismatch,
  degenerate_input,
  config,
  dataset,
  decode,
  io,
  protocol,
  divergence,
  checkpoint_corrupt,
  checkpoint_version,
  runtime,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) raise(code, message);
}

}  // namespace sologan
