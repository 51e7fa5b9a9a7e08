#pragma once

#include <stdexcept>
#include <string>

namespace seat {

// Error categories map 1:1 onto CLI exit codes (config=1, io=2, numeric=3).

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Covers both unreadable files and malformed file contents.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace seat
