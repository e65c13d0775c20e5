#pragma once

#include <stdexcept>
#include <string>

namespace stgin {

enum class ErrorKind {
  shape,
  invalid_argument,
  parse,
  io,
  numeric,
  diverged,
};

const char* to_string(ErrorKind kind);

/// Library-wide exception. `what()` is a single line so the CLI can forward it
/// verbatim as a machine-parseable error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace stgin
