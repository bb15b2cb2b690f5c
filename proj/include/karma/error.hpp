#pragma once

#include <stdexcept>
#include <string>

namespace karma {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Training diverged (non-finite loss or gradients).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration or missing referenced artifact.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace karma
