#pragma once

#include <stdexcept>
#include <string>

namespace blocksweep {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Block counts or block lengths disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar parameter or schedule is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A factorization or linear solve failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An enumeration would be too large.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A structural assumption of a splitting method does not hold for the input.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

/// The requested evaluation is not available for this operator kind.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// A reference solver ran out of budget before its residual converged.
class OracleFailure : public Error {
 public:
  using Error::Error;
};

/// Configuration document could not be parsed or validated.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace blocksweep
