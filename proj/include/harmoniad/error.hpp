#pragma once

#include <stdexcept>
#include <string>

namespace harmoniad {

// Bad configuration or invalid arguments supplied by the operator.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem and container failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, failed numerical tolerances.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace harmoniad
