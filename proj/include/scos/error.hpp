#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scos {

enum class ErrorCode {
  InvalidConfig,
  DimensionMismatch,
  ZeroMeanFrame,
  ContrastUnderflow,
  WindowTooShort,
  BaselineMissing,
  InvalidPhysics,
  InvalidScript,
  NoCardiacPeak,
  SegmentationFailed,
  InsufficientPulses,
  AnnotationOutOfRange,
  NoResponse,
  VolumeResponseTooSmall,
  FitDiverged,
  DegenerateResponse,
  DegenerateSample,
  SampleTooSmall,
  EmptyBucket,
  EmptyGroup,
  MissingRiskScore,
  MalformedFile,
  ParseError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroMeanFrame: return "ZeroMeanFrame";
    case ErrorCode::ContrastUnderflow: return "ContrastUnderflow";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::BaselineMissing: return "BaselineMissing";
    case ErrorCode::InvalidPhysics: return "InvalidPhysics";
    case ErrorCode::InvalidScript: return "InvalidScript";
    case ErrorCode::NoCardiacPeak: return "NoCardiacPeak";
    case ErrorCode::SegmentationFailed: return "SegmentationFailed";
    case ErrorCode::InsufficientPulses: return "InsufficientPulses";
    case ErrorCode::AnnotationOutOfRange: return "AnnotationOutOfRange";
    case ErrorCode::NoResponse: return "NoResponse";
    case ErrorCode::VolumeResponseTooSmall: return "VolumeResponseTooSmall";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::DegenerateResponse: return "DegenerateResponse";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::SampleTooSmall: return "SampleTooSmall";
    case ErrorCode::EmptyBucket: return "EmptyBucket";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::MissingRiskScore: return "MissingRiskScore";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace scos
