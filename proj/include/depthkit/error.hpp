#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace depthkit {

enum class ErrorCode {
  MalformedHeader,
  DimensionOverflow,
  TruncatedPayload,
  IoFailure,
  UnrepresentableValue,
  DuplicateImageId,
  MissingFile,
  DegenerateFit,
  TooSmallForScales,
  ZeroVector,
  MissingCounterpart,
  TooFewKeypoints,
  InvalidPixel,
  UnlabeledPair,
  UnknownAnnotator,
  UnknownPair,
  LeaseExpired,
  DuplicateSubmission,
  InvalidArgument,
  ConfigError,
  DegenerateCamera,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
/// Binary decoders additionally report the byte offset where parsing stopped.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> byte_offset = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> byte_offset() const noexcept { return offset_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

private:
  ErrorCode code_;
  std::optional<std::size_t> offset_;
  std::string detail_;
};

} // namespace depthkit
