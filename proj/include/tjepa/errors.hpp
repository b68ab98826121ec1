#pragma once

#include <stdexcept>
#include <string>

namespace tjepa {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / axis violations.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Bad parameters or configuration (CLI exit code 2).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Dataset / cache problems (CLI exit code 3).
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Cache decode failures, one class per corruption kind.
struct CacheMagicError : DataError {
  explicit CacheMagicError(const std::string& msg) : DataError(msg) {}
};
struct CacheVersionError : DataError {
  explicit CacheVersionError(const std::string& msg) : DataError(msg) {}
};
struct CacheTruncationError : DataError {
  explicit CacheTruncationError(const std::string& msg) : DataError(msg) {}
};
struct CacheChecksumError : DataError {
  explicit CacheChecksumError(const std::string& msg) : DataError(msg) {}
};

// Non-finite values where they must not appear (CLI exit code 4).
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

}  // namespace tjepa
