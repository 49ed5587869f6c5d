#pragma once

#include <stdexcept>
#include <string>

namespace ivsurv {

enum class ErrorCode {
  EmptyDataset,
  NonBinaryTreatment,
  NonBinaryInstrument,
  DegenerateArm,
  InvalidObservation,
  CsvSchema,
  NonFiniteFeature,
  SingularDesign,
  EmptyCell,
  EmptyRiskSet,
  ZeroVarianceInstrument,
  KappaNonPositive,
  WeakInstrument,
  IncompatibleInstrument,
  KTooLarge,
  BootstrapUnstable,
  NegativeHazard,
  NoCompliers,
  DimensionMismatch,
  Config,
};

const char* error_code_name(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ivsurv
