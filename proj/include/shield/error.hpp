#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shield {

// Every failure surfaced by the library carries one of these codes. The CLI
// maps each code to its own process exit status.
enum class ErrorCode {
  kConfig,
  kEmptyInput,
  kParse,
  kTransport,
  kStorage,
  kFormat,
  kMissingField,
  kInvalidRatios,
  kEmptyDataset,
  kEncoderLoad,
  kTokenization,
  kRole,
  kDimMismatch,
  kLengthMismatch,
  kEmptyBatch,
  kMissingFeatures,
  kDivergence,
  kEmptyIntersection,
  kIo,
  kLocked,
};

std::string_view error_name(ErrorCode code);
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const { return error_name(code_); }

 private:
  ErrorCode code_;
};

#define SHIELD_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(Code, message) {}   \
  };

SHIELD_DEFINE_ERROR(ConfigError, ErrorCode::kConfig)
SHIELD_DEFINE_ERROR(EmptyInput, ErrorCode::kEmptyInput)
SHIELD_DEFINE_ERROR(ParseError, ErrorCode::kParse)
SHIELD_DEFINE_ERROR(TransportError, ErrorCode::kTransport)
SHIELD_DEFINE_ERROR(StorageError, ErrorCode::kStorage)
SHIELD_DEFINE_ERROR(FormatError, ErrorCode::kFormat)
SHIELD_DEFINE_ERROR(MissingField, ErrorCode::kMissingField)
SHIELD_DEFINE_ERROR(InvalidRatios, ErrorCode::kInvalidRatios)
SHIELD_DEFINE_ERROR(EmptyDataset, ErrorCode::kEmptyDataset)
SHIELD_DEFINE_ERROR(EncoderLoadError, ErrorCode::kEncoderLoad)
SHIELD_DEFINE_ERROR(TokenizationError, ErrorCode::kTokenization)
SHIELD_DEFINE_ERROR(RoleError, ErrorCode::kRole)
SHIELD_DEFINE_ERROR(DimMismatch, ErrorCode::kDimMismatch)
SHIELD_DEFINE_ERROR(LengthMismatch, ErrorCode::kLengthMismatch)
SHIELD_DEFINE_ERROR(EmptyBatch, ErrorCode::kEmptyBatch)
SHIELD_DEFINE_ERROR(MissingFeatures, ErrorCode::kMissingFeatures)
SHIELD_DEFINE_ERROR(DivergenceError, ErrorCode::kDivergence)
SHIELD_DEFINE_ERROR(EmptyIntersection, ErrorCode::kEmptyIntersection)
SHIELD_DEFINE_ERROR(IoError, ErrorCode::kIo)
SHIELD_DEFINE_ERROR(LockedError, ErrorCode::kLocked)

#undef SHIELD_DEFINE_ERROR

}  // namespace shield
