#pragma once

#include <stdexcept>
#include <string>

namespace ptrial {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structural problems in an input document (missing or unknown fields).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Malformed text that cannot be tokenized (bad JSON, bad CSV cell).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input with an invalid value (probability out of range,
// duplicate key, unknown arm, row sums off).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Invalid simulation or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// No record is concurrently eligible for both arms; a randomized
// comparison does not exist and the caller must acknowledge it.
class EmptyEceError : public Error {
 public:
  using Error::Error;
};

// A restricted analysis set has zero selection probability for an arm
// on a covariate cell where both arms are otherwise available.
class PositivityError : public Error {
 public:
  using Error::Error;
};

// Too few observations to fit a working model.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// An arm (or a stratum-arm cell) has too few observations for an
// estimate or its variance.
class DegenerateArmError : public Error {
 public:
  using Error::Error;
};

// The requested contrast has non-positive estimated variance.
class DegenerateVarianceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ptrial
