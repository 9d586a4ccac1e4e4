#include "bixse/errors.hpp"

namespace bixse {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::InconsistentK: return "InconsistentK";
    case ErrorCode::LabelRange: return "LabelRange";
    case ErrorCode::NoPositive: return "NoPositive";
    case ErrorCode::AllZeroRow: return "AllZeroRow";
    case ErrorCode::NeedsHardNegatives: return "NeedsHardNegatives";
    case ErrorCode::NoOrderedPairs: return "NoOrderedPairs";
    case ErrorCode::BadDistribution: return "BadDistribution";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MixedSchema: return "MixedSchema";
    case ErrorCode::NeedsBinary: return "NeedsBinary";
    case ErrorCode::NeedsOneNegative: return "NeedsOneNegative";
    case ErrorCode::NotEnoughNegatives: return "NotEnoughNegatives";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::NonFiniteGrad: return "NonFiniteGrad";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

bool Error::user_error() const {
  switch (code_) {
    case ErrorCode::LabelRange:
    case ErrorCode::NeedsHardNegatives:
    case ErrorCode::BadDistribution:
    case ErrorCode::ParseError:
    case ErrorCode::MixedSchema:
    case ErrorCode::NeedsBinary:
    case ErrorCode::NeedsOneNegative:
    case ErrorCode::NotEnoughNegatives:
    case ErrorCode::EmptyCorpus:
    case ErrorCode::EmptyDataset:
    case ErrorCode::EmptyResult:
    case ErrorCode::ConfigInvalid:
    case ErrorCode::IoError:
      return true;
    default:
      return false;
  }
}

}  // namespace bixse
