#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace condense {

// Base error type. `kind()` is the token printed on the machine-readable
// error line by the CLI (error_kind=<kind>).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& m) : Error("domain", m) {}
};

struct StateError : Error {
  explicit StateError(const std::string& m) : Error("state", m) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

struct TopologyError : Error {
  explicit TopologyError(const std::string& m) : Error("topology", m) {}
};

struct PlanError : Error {
  explicit PlanError(const std::string& m) : Error("plan", m) {}
};

struct StructuralError : Error {
  explicit StructuralError(const std::string& m) : Error("structural", m) {}
};

struct CalibrationError : Error {
  explicit CalibrationError(const std::string& m) : Error("calibration", m) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error("format", m) {}
};

struct CorruptionError : Error {
  explicit CorruptionError(const std::string& m) : Error("corruption", m) {}
};

struct UnsupportedVersionError : Error {
  explicit UnsupportedVersionError(const std::string& m)
      : Error("unsupported-version", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace condense
