#pragma once

#include <stdexcept>
#include <string>

namespace ebc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement. `field` names the offending input.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& field, std::size_t expected, std::size_t got)
      : Error("dimension mismatch in '" + field + "': expected " + std::to_string(expected) +
              ", got " + std::to_string(got)),
        field_(field) {}
  explicit DimensionError(const std::string& msg) : Error(msg) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class EmptyBufferError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value in data that must be finite.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Malformed or version-incompatible file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Iterative procedure hit its cap without meeting tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ebc
