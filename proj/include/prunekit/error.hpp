#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prunekit {

enum class ErrorCode {
  IndexOutOfRange,
  DuplicateIndex,
  LayerEmptied,
  LengthMismatch,
  EmptyFilter,
  TooFewFilters,
  BufferSizeOutOfRange,
  InvalidArgument,
  SchemaViolation,
  DuplicateName,
  DanglingTensor,
  ShapeMismatch,
  NonFiniteWeight,
  BadMagic,
  BadVersion,
  BadChecksum,
  TruncatedBlob,
  MalformedBlob,
  IoError,
  CountMismatch,
  NonIntegralLabel,
  ClassCountMismatch,
  NotPrunable,
  RatioOutOfRange,
  RankingMismatch,
  AddShapeConflict,
  GraphInvalid,
};

std::string_view error_code_name(ErrorCode code);

// All module failures throw this. what() reads "<CodeName>: <message>";
// code() carries the machine-checkable tag the CLI surfaces on exit.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const { return code_; }
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace prunekit
