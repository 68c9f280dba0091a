#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsm {

enum class ErrorCode {
  InvalidArgument,
  InvalidCorrespondence,
  DegenerateInput,
  InsufficientPoints,
  NormalsRequired,
  FormatError,
  DimensionMismatch,
  EmptyInput,
  InvalidCount,
  ConditionTooRare,
  InsufficientData,
  InsufficientCorrespondences,
  FileError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidCorrespondence: return "InvalidCorrespondence";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::NormalsRequired: return "NormalsRequired";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidCount: return "InvalidCount";
    case ErrorCode::ConditionTooRare: return "ConditionTooRare";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::FileError: return "FileError";
  }
  return "Unknown";
}

// Base exception for every library failure; `code()` identifies the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed file contents. `offset` is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(ErrorCode::FormatError, what + " (at byte " + std::to_string(offset) + ")"),
        detail_(what),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

class ConditionTooRare : public Error {
 public:
  ConditionTooRare(std::size_t accepted, std::size_t samples)
      : Error(ErrorCode::ConditionTooRare,
              "condition met in " + std::to_string(accepted) + " of " +
                  std::to_string(samples) + " samples"),
        accepted_(accepted) {}

  std::size_t accepted() const noexcept { return accepted_; }

 private:
  std::size_t accepted_;
};

}  // namespace gsm
