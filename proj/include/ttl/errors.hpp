// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ttl {

// Base class for all toolkit errors. CLI maps each subclass to a distinct
// exit code.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid numeric input (non-positive count, negative energy, ...).
class DomainError : public Error {
  public:
    using Error::Error;
};

// Incompatible tensor shapes.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// Invalid configuration (vocab too small, odd head dim, ...).
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Filesystem failures, always carrying the path.
class IoError : public Error {
  public:
    using Error::Error;
};

// Unrecognized or mismatched file contents: bad magic, wrong version,
// fingerprint mismatch.
class FormatError : public Error {
  public:
    using Error::Error;
};

} // namespace ttl
