#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mathink {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input document does not follow the expected format.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit FormatError(const std::string& what) : Error(what) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_ = 0;
};

/// Data is well-formed but violates a domain invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Structural analysis could not build a valid expression.
class StructureError : public Error {
 public:
  using Error::Error;
};

}  // namespace mathink
