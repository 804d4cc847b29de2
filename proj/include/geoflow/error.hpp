#pragma once

#include <stdexcept>
#include <string>

namespace geoflow {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input from the outside world: malformed files, out-of-range config,
// missing paths. The CLI maps these to exit code 2.
struct InputError : Error {
  using Error::Error;
};

// Malformed text or binary payloads (config files, datasets, checkpoints).
struct ParseError : InputError {
  using InputError::InputError;
};

// Numerical failure at runtime: singular geometry, non-finite values,
// degenerate fits. The CLI maps these to exit code 1.
struct NumericError : Error {
  using Error::Error;
};

// A geometric operation was evaluated outside its domain (antipodal log map,
// normalizing a near-zero vector, ...).
struct SingularityError : NumericError {
  using NumericError::NumericError;
};

// The adaptive ODE solver could not make progress at the requested tolerance.
struct StiffnessError : NumericError {
  using NumericError::NumericError;
};

}  // namespace geoflow
