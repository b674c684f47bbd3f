/*
 * Copyright 2026 The CSST Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace csst {

// Base class for every error raised by the library. Callers that only care
// about "something was wrong with the request" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched lengths or matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument is outside the mathematical domain of the operation
// (negative weight, prior of zero, probability off the simplex, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Recall or precision requested for a class whose denominator is zero.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// A file or stream does not follow the expected format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// The file format is recognized but written by an incompatible version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace csst
