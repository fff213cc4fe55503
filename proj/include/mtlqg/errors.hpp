#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mtlqg {

enum class ErrorKind {
  Validation,
  Io,
  NonSymmetric,
  Unstable,
  NotStabilizable,
  RIndefinite,
  RankDeficient,
  FilterUnstable,
  SingularInnovation,
  NotStabilizing,
  MarginTooLarge,
  AssumptionViolated,
  Diverged,
  PerturbationDestabilizes,
  NoCommonStabilizer,
  StepDestabilized,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return "Validation";
    case ErrorKind::Io: return "Io";
    case ErrorKind::NonSymmetric: return "NonSymmetric";
    case ErrorKind::Unstable: return "Unstable";
    case ErrorKind::NotStabilizable: return "NotStabilizable";
    case ErrorKind::RIndefinite: return "RIndefinite";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::FilterUnstable: return "FilterUnstable";
    case ErrorKind::SingularInnovation: return "SingularInnovation";
    case ErrorKind::NotStabilizing: return "NotStabilizing";
    case ErrorKind::MarginTooLarge: return "MarginTooLarge";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::PerturbationDestabilizes: return "PerturbationDestabilizes";
    case ErrorKind::NoCommonStabilizer: return "NoCommonStabilizer";
    case ErrorKind::StepDestabilized: return "StepDestabilized";
  }
  return "Unknown";
}

/// Exception type thrown by every module. `kind()` lets callers (the CLI in
/// particular) map failures onto exit codes without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

  /// Validation and I/O problems are user errors; everything else is a
  /// numerical failure.
  bool is_validation() const noexcept {
    return kind_ == ErrorKind::Validation || kind_ == ErrorKind::Io;
  }

 private:
  ErrorKind kind_;
  std::string message_;
};

/// Error carrying the index of the offending item (task, sample, pair).
class IndexedError : public Error {
 public:
  IndexedError(ErrorKind kind, const std::string& what, long index)
      : Error(kind, what), index_(index) {}

  long index() const noexcept { return index_; }

 private:
  long index_;
};

}  // namespace mtlqg
