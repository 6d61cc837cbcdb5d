#pragma once

#include <stdexcept>
#include <string>

namespace fovea {

/// Raised when inputs violate a documented precondition (bad dimensions,
/// invalid parameters, malformed files).
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by gaze policies when every cell has already been visited.
class TrialExhausted : public std::runtime_error {
public:
  TrialExhausted() : std::runtime_error("all cells visited; no fixation candidate left") {}
};

/// Raised when the observation model has no usable likelihood for a request.
class ModelUnavailable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace fovea
