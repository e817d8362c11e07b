// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace maskforge {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// process exit codes: IoError -> 1, ArgumentError -> 2, FormatError and
// ValidationError -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller passed parameters that violate an operation's preconditions.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A file's bytes do not parse under its declared format. Messages name the
// offending byte or line offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Parsed data violates a domain constraint (non-finite coordinate,
// non-stochastic attention row, empty cloud, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure (cannot open, cannot write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskforge
