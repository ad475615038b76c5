#include "prunekit/error.hpp"

namespace prunekit {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DuplicateIndex: return "DuplicateIndex";
    case ErrorCode::LayerEmptied: return "LayerEmptied";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyFilter: return "EmptyFilter";
    case ErrorCode::TooFewFilters: return "TooFewFilters";
    case ErrorCode::BufferSizeOutOfRange: return "BufferSizeOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::DanglingTensor: return "DanglingTensor";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteWeight: return "NonFiniteWeight";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::BadChecksum: return "BadChecksum";
    case ErrorCode::TruncatedBlob: return "TruncatedBlob";
    case ErrorCode::MalformedBlob: return "MalformedBlob";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::NonIntegralLabel: return "NonIntegralLabel";
    case ErrorCode::ClassCountMismatch: return "ClassCountMismatch";
    case ErrorCode::NotPrunable: return "NotPrunable";
    case ErrorCode::RatioOutOfRange: return "RatioOutOfRange";
    case ErrorCode::RankingMismatch: return "RankingMismatch";
    case ErrorCode::AddShapeConflict: return "AddShapeConflict";
    case ErrorCode::GraphInvalid: return "GraphInvalid";
  }
  return "UnknownError";
}

}  // namespace prunekit
