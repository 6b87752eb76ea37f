// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace i2pref {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument values: empty clouds, out-of-range counts, non-finite data.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Inconsistent architecture or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced during a forward or training pass.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { Corrupt, Version, Incompatible };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace i2pref
