#include "ivsurv/error.hpp"

namespace ivsurv {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::NonBinaryInstrument: return "NonBinaryInstrument";
    case ErrorCode::DegenerateArm: return "DegenerateArm";
    case ErrorCode::InvalidObservation: return "InvalidObservation";
    case ErrorCode::CsvSchema: return "CsvSchema";
    case ErrorCode::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::EmptyRiskSet: return "EmptyRiskSet";
    case ErrorCode::ZeroVarianceInstrument: return "ZeroVarianceInstrument";
    case ErrorCode::KappaNonPositive: return "KappaNonPositive";
    case ErrorCode::WeakInstrument: return "WeakInstrument";
    case ErrorCode::IncompatibleInstrument: return "IncompatibleInstrument";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::BootstrapUnstable: return "BootstrapUnstable";
    case ErrorCode::NegativeHazard: return "NegativeHazard";
    case ErrorCode::NoCompliers: return "NoCompliers";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace ivsurv
