#pragma once

#include <stdexcept>
#include <string>

namespace mmfuse {

// Violated operation contract: bad arguments, dimension mismatch, out-of-range values.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Solver or floating-point failure that valid inputs should never trigger.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable, malformed, or truncated external data (files, archives, labels).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: unknown keys, unparsable values, missing required paths.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mmfuse
