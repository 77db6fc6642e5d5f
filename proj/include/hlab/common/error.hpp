// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace hlab {

// Error categories map one-to-one onto CLI exit codes:
// UsageError -> 1, DataError/IoError -> 2, NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Shape/contract violations inside the tensor engine.
class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

}  // namespace hlab
