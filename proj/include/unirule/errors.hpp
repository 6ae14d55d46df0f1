#pragma once

#include <stdexcept>
#include <string>

namespace unirule {

// Error taxonomy mirrors the CLI exit codes:
// usage/config -> 1, data -> 2, internal invariant -> 3.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct InternalError : std::runtime_error {
  explicit InternalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace unirule
