// include/dapc/errors.hpp

// Copyright 2026 The dapc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef DAPC_ERRORS_HPP
#define DAPC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dapc {

// Base class for all toolkit errors. The CLI maps each subclass to a
// distinct exit code.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Index or range outside the addressed object.
struct BoundsError : Error {
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset missing, malformed, or too short.
struct DataError : Error {
  using Error::Error;
};

// Numerical failure (divergence, non-finite values).
struct NumericError : Error {
  using Error::Error;
};

// Cholesky factorization failed; `pivot` is the first non-positive pivot.
struct NotPositiveDefiniteError : NumericError {
  NotPositiveDefiniteError(const std::string& msg, int pivot_index)
      : NumericError(msg), pivot(pivot_index) {}
  int pivot;
};

// Filesystem / serialization failure.
struct IoError : Error {
  using Error::Error;
};

// Evaluation protocol violated (e.g. non-causal encoder in forecasting).
struct ProtocolError : Error {
  using Error::Error;
};

}  // namespace dapc

#endif  // DAPC_ERRORS_HPP
