#pragma once

#include <stdexcept>
#include <string>

namespace hydro {

enum class ErrorKind {
  DuplicateBranch,
  NoReferenceBus,
  CascadeCycle,
  NegativeCapacity,
  InvalidData,
  IndexOutOfRange,
  DimensionMismatch,
  UnsupportedKind,
  EigenFailure,
  StageSolveFailure,
  NoLocalSolution,
  MismatchedScenarios,
  ParseError,
  ProbabilitySumError,
  NegativeInflow,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DuplicateBranch: return "DuplicateBranch";
    case ErrorKind::NoReferenceBus: return "NoReferenceBus";
    case ErrorKind::CascadeCycle: return "CascadeCycle";
    case ErrorKind::NegativeCapacity: return "NegativeCapacity";
    case ErrorKind::InvalidData: return "InvalidData";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::UnsupportedKind: return "UnsupportedKind";
    case ErrorKind::EigenFailure: return "EigenFailure";
    case ErrorKind::StageSolveFailure: return "StageSolveFailure";
    case ErrorKind::NoLocalSolution: return "NoLocalSolution";
    case ErrorKind::MismatchedScenarios: return "MismatchedScenarios";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ProbabilitySumError: return "ProbabilitySumError";
    case ErrorKind::NegativeInflow: return "NegativeInflow";
  }
  return "Unknown";
}

}  // namespace hydro
