#pragma once

#include <stdexcept>
#include <string>

namespace rmaml {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names the offending node or op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A loss, gradient or parameter became NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument value. `field()` names the culprit when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error(field.empty() ? message : field + ": " + message), message_(message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }
  /// The message without the field prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::string field_;
};

/// Malformed or truncated on-disk data (datasets, checkpoints, reports).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File-system failure; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rmaml
