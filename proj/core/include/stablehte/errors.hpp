#pragma once

#include <stdexcept>
#include <string>

namespace stablehte {

// Error taxonomy. The CLI maps these onto process exit codes:
//   ConfigError -> 2, DataError (and subclasses) -> 3, DivergenceError -> 4,
//   anything else -> 1.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent run configuration (unknown keys, invalid ranges,
// unsupported backbone, missing required fields).
struct ConfigError : Error {
  using Error::Error;
};

// Problems with input data: unreadable files, malformed rows, schema
// mismatches, missing ground-truth columns required by a requested metric.
struct DataError : Error {
  using Error::Error;
};

struct LoadError : DataError {
  using DataError::DataError;
};

// A metric or loss was asked for data it cannot be computed from
// (for example counterfactual error without potential outcomes).
struct ProtocolError : DataError {
  using DataError::DataError;
};

// A treatment arm is empty where both arms are required.
struct OverlapError : DataError {
  using DataError::DataError;
};

// Shape mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// API misuse that a caller could have avoided (backward from a non-scalar,
// reading a gradient before backward, and so on).
struct ContractError : Error {
  using Error::Error;
};

// Numeric input outside an operation's domain (log of a non-positive
// value, exp overflow).
struct DomainError : Error {
  using Error::Error;
};

// All sample weights vanished; normalized weights are undefined.
struct DegenerateWeightsError : Error {
  using Error::Error;
};

// Non-finite gradient or parameter reached the optimizer.
struct OptimizerError : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace stablehte
