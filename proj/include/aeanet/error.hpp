#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace aeanet {

// Error categories map onto CLI exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when an input carries no usable signal (e.g. a constant image for Otsu).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace aeanet
