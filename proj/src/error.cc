#include "ufd/error.h"

namespace ufd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kZeroNormVector: return "ZeroNormVector";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kUnknownClassId: return "UnknownClassId";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kFormatVersionUnsupported: return "FormatVersionUnsupported";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kCorruptData: return "CorruptData";
    case ErrorCode::kEncoderMismatch: return "EncoderMismatch";
    case ErrorCode::kInsufficientEntries: return "InsufficientEntries";
    case ErrorCode::kMissingClassIds: return "MissingClassIds";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kEmptyLabelSide: return "EmptyLabelSide";
    case ErrorCode::kSingleClassBank: return "SingleClassBank";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kSingleClassInput: return "SingleClassInput";
    case ErrorCode::kEncoderFailure: return "EncoderFailure";
    case ErrorCode::kKernelTooLarge: return "KernelTooLarge";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kManifestUnresolvable: return "ManifestUnresolvable";
    case ErrorCode::kCalibrationSourceMissing: return "CalibrationSourceMissing";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace ufd
