#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace lineagelab {

enum class ErrorKind {
  InvalidConfig,
  NoConvergence,
  DegenerateWeight,
  StabilityViolation,
  WindowExit,
  BranchInversionFailure,
  Extinction,
  OrphanChain,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DegenerateWeight: return "DegenerateWeight";
    case ErrorKind::StabilityViolation: return "StabilityViolation";
    case ErrorKind::WindowExit: return "WindowExit";
    case ErrorKind::BranchInversionFailure: return "BranchInversionFailure";
    case ErrorKind::Extinction: return "Extinction";
    case ErrorKind::OrphanChain: return "OrphanChain";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so the
/// CLI can map it onto an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised for configuration problems; `key` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(ErrorKind::InvalidConfig, what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace lineagelab
