#pragma once

#include <stdexcept>
#include <string>

namespace gcsim {

/// Bad command-line usage or malformed configuration. CLI exit code 1.
class UsageError : public std::runtime_error {
public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Schema mismatch, version mismatch, missing regime, unreadable file.
/// CLI exit code 2.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values reached a place that requires finite ones
/// (loss diverged, estimator emitted NaN). CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gcsim
