#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dcreg {

enum class ErrorCode {
  // data
  NonFiniteValue,
  InconsistentDimension,
  DeltaOutOfRange,
  CensoringMismatch,
  NegativeAge,
  EmptyDataset,
  ParseError,
  // censoring
  UnfittedModel,
  EmptyStratum,
  Nonconvergence,
  SingularInformation,
  InvalidParameter,
  // estimation / inference
  NoAtRiskSubjects,
  SingularJacobian,
  TooManyFailures,
  RequiresBothApproaches,
  // smoothing
  InsufficientPoints,
  // simulation
  ConfigInvalid,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI, the study harness) can tally or map them to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InconsistentDimension: return "InconsistentDimension";
    case ErrorCode::DeltaOutOfRange: return "DeltaOutOfRange";
    case ErrorCode::CensoringMismatch: return "CensoringMismatch";
    case ErrorCode::NegativeAge: return "NegativeAge";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnfittedModel: return "UnfittedModel";
    case ErrorCode::EmptyStratum: return "EmptyStratum";
    case ErrorCode::Nonconvergence: return "Nonconvergence";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::NoAtRiskSubjects: return "NoAtRiskSubjects";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::RequiresBothApproaches: return "RequiresBothApproaches";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

}  // namespace dcreg
