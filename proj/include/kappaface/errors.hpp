#pragma once

#include <stdexcept>
#include <string>

namespace kappaface {

enum class ErrorKind {
  ZeroVector,
  EmptySet,
  DimensionMismatch,
  InvalidDimension,
  InvalidArgument,
  IndexOutOfRange,
  EmptyClass,
  PopulationExceedsMax,
  NonUnitInput,
  ConfigMismatch,
  StaleCache,
  SpecInvalid,
  InsufficientPairs,
  FormatError,
  DegeneratePairs,
  ConfigError,
  IoError,
  NumericalAbort,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the whole library; `kind()` identifies the
/// contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidDimension: return "InvalidDimension";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::PopulationExceedsMax: return "PopulationExceedsMax";
    case ErrorKind::NonUnitInput: return "NonUnitInput";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::SpecInvalid: return "SpecInvalid";
    case ErrorKind::InsufficientPairs: return "InsufficientPairs";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::DegeneratePairs: return "DegeneratePairs";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::NumericalAbort: return "NumericalAbort";
  }
  return "Error";
}

}  // namespace kappaface
