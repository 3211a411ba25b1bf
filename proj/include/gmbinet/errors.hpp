// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gmbinet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or graph shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (indivisible channel counts, bad flags, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Artifact built for a different graph (checkpoint fingerprint mismatch).
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gmbinet
