#include "depthkit/error.hpp"

namespace depthkit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::MalformedHeader: return "MalformedHeader";
  case ErrorCode::DimensionOverflow: return "DimensionOverflow";
  case ErrorCode::TruncatedPayload: return "TruncatedPayload";
  case ErrorCode::IoFailure: return "IoFailure";
  case ErrorCode::UnrepresentableValue: return "UnrepresentableValue";
  case ErrorCode::DuplicateImageId: return "DuplicateImageId";
  case ErrorCode::MissingFile: return "MissingFile";
  case ErrorCode::DegenerateFit: return "DegenerateFit";
  case ErrorCode::TooSmallForScales: return "TooSmallForScales";
  case ErrorCode::ZeroVector: return "ZeroVector";
  case ErrorCode::MissingCounterpart: return "MissingCounterpart";
  case ErrorCode::TooFewKeypoints: return "TooFewKeypoints";
  case ErrorCode::InvalidPixel: return "InvalidPixel";
  case ErrorCode::UnlabeledPair: return "UnlabeledPair";
  case ErrorCode::UnknownAnnotator: return "UnknownAnnotator";
  case ErrorCode::UnknownPair: return "UnknownPair";
  case ErrorCode::LeaseExpired: return "LeaseExpired";
  case ErrorCode::DuplicateSubmission: return "DuplicateSubmission";
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  case ErrorCode::ConfigError: return "ConfigError";
  case ErrorCode::DegenerateCamera: return "DegenerateCamera";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::size_t> offset) {
  std::string out{to_string(code)};
  out += ": ";
  out += message;
  if (offset) {
    out += " (at byte offset " + std::to_string(*offset) + ")";
  }
  return out;
}

} // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> byte_offset)
    : std::runtime_error(decorate(code, message, byte_offset)), code_(code),
      offset_(byte_offset), detail_(message) {}

} // namespace depthkit
