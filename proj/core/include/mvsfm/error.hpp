#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvsfm {

enum class ErrorCode {
  // container
  BadMagic,
  UnsupportedCodec,
  Truncated,
  BadHeaderLen,
  TruncatedFrame,
  ForbiddenBitSet,
  Leb128Overflow,
  SizeOverrun,
  MissingSizeField,
  // motion field files
  VersionUnsupported,
  TilingGap,
  TilingOverlap,
  TruncatedRecord,
  InvariantViolation,
  OutOfBounds,
  // trajectories
  UnsortedFields,
  // exporters
  SinkFailure,
  MissingImageName,
  NonFinitePoint,
  // synth
  DegenerateMotion,
  DegenerateBaseline,
  BehindCamera,
  // metrics
  EmptyTracks,
  EmptySet,
  DimensionMismatch,
  ImageTooSmall,
  // config / pipeline
  UnknownKey,
  TypeError,
  MissingInput,
  IoError,
};

std::string_view to_string(ErrorCode code);

// All recoverable failures carry a machine-checkable code plus a message
// with whatever context the call site had (frame index, offending line, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mvsfm
