#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace klcbl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or configuration shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, overflow, or a gradient that cannot be trusted.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, training, or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or interchange file. Carries the position of the fault.
class FormatError : public Error {
 public:
  enum class Unit { kLine, kByte };

  FormatError(const std::string& what, Unit unit, std::uint64_t position)
      : Error(what + (unit == Unit::kLine ? " (line " : " (byte offset ") +
              std::to_string(position) + ")"),
        unit_(unit),
        position_(position) {}

  Unit unit() const { return unit_; }
  std::uint64_t position() const { return position_; }

 private:
  Unit unit_;
  std::uint64_t position_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace klcbl
