#pragma once

#include <stdexcept>
#include <string>

namespace hmdr {

// Invalid configuration, parameter/shape mismatch, or malformed run config.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, misaligned, or corrupt data on disk.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values encountered during compute.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hmdr
