// Copyright 2026 The BCA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BCA_ERROR_HPP_
#define BCA_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace bca {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand lengths or shapes are inconsistent.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input or loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Checkpoint payload is truncated or fails its checksum.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint shape does not match the layer it is loaded into.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint was written by an unknown format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bca

#endif  // BCA_ERROR_HPP_
