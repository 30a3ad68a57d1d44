#pragma once

#include <stdexcept>
#include <string>

namespace disc {

/// Operand dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller-side precondition does not hold (e.g. partial mask with an empty cache).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A tunable is outside its legal range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sparse step requested before any dense step produced a mask.
class ScheduleError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Config text could not be parsed or failed validation.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace disc
