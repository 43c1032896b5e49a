#pragma once

#include <stdexcept>
#include <string>

namespace signet {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layer shape disagreement; message names both shapes.
class DimError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid configuration (layer hyperparameters, session setup).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API contract violation, e.g. backward() on a non-scalar loss.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Dataset-level problem (window out of range, single-class split input).
class DataError : public Error {
 public:
  using Error::Error;
};

// File parsing failure; message carries file and line context.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given input (e.g. AUC on a single class).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Operation not available for this object (e.g. Q/K/V export on a CNN).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure outside of parsing (unwritable path, truncated file).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace signet
