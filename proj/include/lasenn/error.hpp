#pragma once

#include <stdexcept>
#include <string>

namespace lasenn {

/// Malformed file header: bad magic, unsupported version or dtype.
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Well-formed data that breaks an invariant (non-finite value, label out of range).
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Short read or failed write.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Caller passed inconsistent arguments (dimension mismatch, empty input, bad index).
class ArgumentError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Training or attack produced a non-finite quantity.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace lasenn
