// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace egru {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value that must be finite is not, or training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

// An invalid hyper-parameter (e.g. non-positive surrogate width).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// An API was called out of contract (length mismatches, sparsity going down).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Corpus, vocabulary or token ids are unusable.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace egru
