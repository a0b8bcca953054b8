#pragma once

#include <stdexcept>
#include <string>

namespace mctailor {

// Bad input data: unreadable files, malformed formats, mismatched artifacts.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range or inconsistent parameter values.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A sampler could not produce the requested samples: the acceptance rate
// collapsed while collecting negatives, or the proposal budget ran out in a
// context where a partial batch is not usable.
class StarvationError : public std::runtime_error {
 public:
  StarvationError(const std::string& msg, double acceptance_rate)
      : std::runtime_error(msg), acceptance_rate(acceptance_rate) {}
  double acceptance_rate;
};

// Numerical failure during estimator training (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mctailor
