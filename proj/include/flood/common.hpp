#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace flood {

// Exit-code convention used by the CLI: 2 = bad input/config, 1 = runtime failure.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

using Rng = std::mt19937_64;

}  // namespace flood
