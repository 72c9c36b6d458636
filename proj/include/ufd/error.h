#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ufd {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kZeroNormVector,
  kNonFiniteValue,
  kEmptyInput,
  kUnknownClassId,
  kBadMagic,
  kFormatVersionUnsupported,
  kChecksumMismatch,
  kTruncatedFile,
  kCorruptData,
  kEncoderMismatch,
  kInsufficientEntries,
  kMissingClassIds,
  kKTooLarge,
  kEmptyLabelSide,
  kSingleClassBank,
  kNonFiniteLoss,
  kSingleClassInput,
  kEncoderFailure,
  kKernelTooLarge,
  kEmptyCorpus,
  kIoFailure,
  kManifestUnresolvable,
  kCalibrationSourceMissing,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map it to an exit status and tests can assert on the exact kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

inline void check(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) raise(code, message);
}

}  // namespace ufd
