#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace genprobe {

enum class ErrorCode {
  UnsupportedShape,
  NonFinite,
  DegenerateSpectrum,
  EmptyResult,
  OptimizationFailure,
  EmptyModel,
  DegenerateNorm,
  ConstantInput,
  LengthMismatch,
  IoError,
  DuplicateName,
  BadMagic,
  UnsupportedVersion,
  CorruptIndex,
  TruncatedPayload,
  ParseError,
  DuplicateKey,
  ScaleMixing,
  DivergenceDetected,
  InvalidArgument,
};

constexpr std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnsupportedShape: return "UnsupportedShape";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::OptimizationFailure: return "OptimizationFailure";
    case ErrorCode::EmptyModel: return "EmptyModel";
    case ErrorCode::DegenerateNorm: return "DegenerateNorm";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::ScaleMixing: return "ScaleMixing";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Every failure raised by the toolkit carries one of the codes above so that
// callers (and the CLI exit-code mapping) can branch on kind, not message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace genprobe
