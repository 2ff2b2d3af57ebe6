#pragma once

#include <stdexcept>
#include <string>

namespace oedflow {

/// Precondition or shape violation detected at an API boundary.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced (or was handed) a non-finite value, or a
/// factorization failed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, Truncated, ExtentMismatch, VersionMismatch, Io, Corrupt };

  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace oedflow
