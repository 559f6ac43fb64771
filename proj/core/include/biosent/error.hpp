#pragma once
#include <stdexcept>
#include <string>

namespace biosent {

enum class ErrorCode {
  MalformedHeader,
  BadRate,
  DuplicateChannel,
  UnknownChannel,
  TooShort,
  EmptyChannel,
  InvalidOverlap,
  RateMismatch,
  EmptySentence,
  SentenceTooLong,
  BadFftSize,
  ShapeError,
  NaNGradient,
  CorruptCheckpoint,
  IncompatibleCheckpoint,
  DegenerateLabels,
  BadConfig,
  IoError,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::BadRate: return "BadRate";
    case ErrorCode::DuplicateChannel: return "DuplicateChannel";
    case ErrorCode::UnknownChannel: return "UnknownChannel";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::EmptyChannel: return "EmptyChannel";
    case ErrorCode::InvalidOverlap: return "InvalidOverlap";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::EmptySentence: return "EmptySentence";
    case ErrorCode::SentenceTooLong: return "SentenceTooLong";
    case ErrorCode::BadFftSize: return "BadFftSize";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::NaNGradient: return "NaNGradient";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace biosent
