#pragma once

#include <stdexcept>
#include <string>

namespace lindyn {

enum class ErrorCode {
  NonSymmetric,
  IndefiniteInput,
  NonFinite,
  ZeroMatrix,
  BadRank,
  DimensionMismatch,
  ModeMismatch,
  Diverged,
  DegenerateTarget,
  ZeroVector,
  AllEqual,
  NotActiveRegion,
  ScheduleMismatch,
  IoError,
  ConfigError,
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonSymmetric: return "NonSymmetric";
    case ErrorCode::IndefiniteInput: return "IndefiniteInput";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ZeroMatrix: return "ZeroMatrix";
    case ErrorCode::BadRank: return "BadRank";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::AllEqual: return "AllEqual";
    case ErrorCode::NotActiveRegion: return "NotActiveRegion";
    case ErrorCode::ScheduleMismatch: return "ScheduleMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace lindyn
