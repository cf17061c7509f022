#pragma once

#include <stdexcept>
#include <string>

namespace restartq {

// Invalid user input: malformed config, out-of-range parameter. Maps to CLI
// exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure during a simulation or analytic evaluation on valid input. Maps to
// CLI exit code 3.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Not enough data for an estimator. Maps to CLI exit code 4.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace restartq
