#include "error.hpp"

namespace tailcast {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::DuplicateDate: return "DuplicateDate";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::GapTooLarge: return "GapTooLarge";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::TooFewObservations: return "TooFewObservations";
    case ErrorKind::TooFewExceedances: return "TooFewExceedances";
    case ErrorKind::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case ErrorKind::OutOfSupport: return "OutOfSupport";
    case ErrorKind::DegenerateSeries: return "DegenerateSeries";
    case ErrorKind::MissingDescriptors: return "MissingDescriptors";
    case ErrorKind::EmptyWindowSet: return "EmptyWindowSet";
    case ErrorKind::ZeroVarianceStation: return "ZeroVarianceStation";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyMaskRow: return "EmptyMaskRow";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::BackwardTwice: return "BackwardTwice";
    case ErrorKind::IsolatedNode: return "IsolatedNode";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::SingleClassInput: return "SingleClassInput";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::Io: return "Io";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
    case ErrorKind::MissingMetric: return "MissingMetric";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidParams:
      return ErrorCategory::Config;
    case ErrorKind::TooFewExceedances:
    case ErrorKind::NonFiniteLikelihood:
    case ErrorKind::OutOfSupport:
    case ErrorKind::DegenerateSeries:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::EmptyMaskRow:
    case ErrorKind::NonScalarLoss:
    case ErrorKind::BackwardTwice:
    case ErrorKind::IsolatedNode:
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NonFiniteGradient:
      return ErrorCategory::Numeric;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace tailcast
