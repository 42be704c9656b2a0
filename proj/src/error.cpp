#include "shield/error.hpp"

namespace shield {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kTransport: return "TransportError";
    case ErrorCode::kStorage: return "StorageError";
    case ErrorCode::kFormat: return "FormatError";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kInvalidRatios: return "InvalidRatios";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEncoderLoad: return "EncoderLoadError";
    case ErrorCode::kTokenization: return "TokenizationError";
    case ErrorCode::kRole: return "RoleError";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kMissingFeatures: return "MissingFeatures";
    case ErrorCode::kDivergence: return "DivergenceError";
    case ErrorCode::kEmptyIntersection: return "EmptyIntersection";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kLocked: return "LockedError";
  }
  return "Error";
}

// 1 is reserved for unexpected failures, 64 for usage errors.
int exit_code_for(ErrorCode code) {
  return 10 + static_cast<int>(code);
}

}  // namespace shield
