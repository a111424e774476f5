// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_ERRORS_HPP
#define ADVTTS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace advtts {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/rank mismatch between tensors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (bad hyperparameter, odd/even width, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input value outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite arithmetic is required (training divergence).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed text input (config files, corpus specs, manifests).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Filesystem read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Stored artifact is internally inconsistent (truncated payload, ...).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace advtts

#endif  // ADVTTS_ERRORS_HPP
