// phmm/error.hpp

// Copyright 2026  The phmm Authors

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

#ifndef PHMM_ERROR_HPP_
#define PHMM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace phmm {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file exists but its contents are malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A well-formed file uses an encoding we do not read (e.g. 24-bit PCM).
class UnsupportedFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Caller supplied arguments violating a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or another numerical breakdown during computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace phmm

#endif  // PHMM_ERROR_HPP_
