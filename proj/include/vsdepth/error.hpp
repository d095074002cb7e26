#pragma once

#include <stdexcept>
#include <string>

namespace vsdepth {

/// Raised when an operation receives data that violates its preconditions
/// (shape mismatch, non-positive depth, empty inputs).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for bad run configuration: unknown keys, out-of-range values,
/// unknown class ids. `key()` names the offending entry when there is one.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, std::string key = {})
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Raised when a training step produces a non-finite loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vsdepth
