#pragma once

#include <stdexcept>
#include <string>

namespace somgan {

// Error categories double as CLI exit codes.
enum class ErrorKind : int {
  Config = 2,
  Io = 3,
  Parse = 4,
  Dimension = 5,
  Numerical = 6,
  Divergence = 7,
  Precondition = 8,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::Dimension, what);
}

}  // namespace somgan
