#pragma once

#include <stdexcept>
#include <string>

namespace s2pnm {

/// Bad flags, config keys or option values (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unusable input data, corrupt checkpoints, shape mismatches (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace s2pnm
