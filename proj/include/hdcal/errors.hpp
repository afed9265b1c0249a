#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hdcal {

enum class ErrorCode {
  kSumMismatch,
  kZeroDenominator,
  kDimensionMismatch,
  kAbsoluteContinuityViolation,
  kOverflow,
  kOutOfRange,
  kInconsistentCounts,
  kOutOfOrderDay,
  kMissingTauEntry,
  kMissingMixture,
  kMissingRealizedPrediction,
  kConfigInvalid,
  kBudgetExceeded,
  kIoError,
  kMissingTranscript,
  kCorruptRecord,
  kInvalidForecaster,
  kAdaptiveAdversaryUnsupported,
  kInvalidArgument,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSumMismatch: return "SumMismatch";
    case ErrorCode::kZeroDenominator: return "ZeroDenominator";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kAbsoluteContinuityViolation: return "AbsoluteContinuityViolation";
    case ErrorCode::kOverflow: return "Overflow";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kInconsistentCounts: return "InconsistentCounts";
    case ErrorCode::kOutOfOrderDay: return "OutOfOrderDay";
    case ErrorCode::kMissingTauEntry: return "MissingTauEntry";
    case ErrorCode::kMissingMixture: return "MissingMixture";
    case ErrorCode::kMissingRealizedPrediction: return "MissingRealizedPrediction";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kBudgetExceeded: return "BudgetExceeded";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kMissingTranscript: return "MissingTranscript";
    case ErrorCode::kCorruptRecord: return "CorruptRecord";
    case ErrorCode::kInvalidForecaster: return "InvalidForecaster";
    case ErrorCode::kAdaptiveAdversaryUnsupported: return "AdaptiveAdversaryUnsupported";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// All library failures are reported through this exception; code() carries
// the machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hdcal
