#pragma once

#include <stdexcept>
#include <string>

namespace bixse {

enum class ErrorCode {
  ZeroVector,
  EmptyText,
  DimMismatch,
  ShapeMismatch,
  StaleCache,
  InconsistentK,
  LabelRange,
  NoPositive,
  AllZeroRow,
  NeedsHardNegatives,
  NoOrderedPairs,
  BadDistribution,
  ParseError,
  MixedSchema,
  NeedsBinary,
  NeedsOneNegative,
  NotEnoughNegatives,
  EmptyCorpus,
  EmptyDataset,
  EmptyResult,
  ConfigInvalid,
  NonFiniteGrad,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

  /// True for errors caused by user input or configuration (CLI exit code 2),
  /// false for internal failures (exit code 1).
  bool user_error() const;

 private:
  ErrorCode code_;
};

}  // namespace bixse
