#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedft {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layer dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/inf produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Operation invoked on stale or missing state (e.g. backward without a matching forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Client updates disagree with the global model layout.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Experiment or federation configuration rejected before compute starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed binary or CSV input. Carries the byte offset at which parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& field, std::size_t offset, const std::string& detail)
      : Error("format error in '" + field + "' at byte " + std::to_string(offset) + ": " + detail),
        field_(field),
        offset_(offset) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string field_;
  std::size_t offset_;
};

}  // namespace fedft
