#pragma once

#include <stdexcept>
#include <string>

namespace metainv {

/// Raised when a computation produces or detects invalid numerics
/// (non-finite values, divergence, unsatisfiable tolerances).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised by the harness when an experiment configuration is invalid.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace metainv
