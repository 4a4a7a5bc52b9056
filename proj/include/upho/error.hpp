#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace upho {

enum class ErrorCode {
  // tabledata
  MalformedRow,
  BadGeoCode,
  NonNumericCell,
  DuplicateGeoCode,
  MissingBinding,
  LevelMismatch,
  ColumnNameCollision,
  EmptyJoin,
  UnknownZip,
  // stats
  LengthMismatch,
  ConstantInput,
  SingularDesign,
  InsufficientRows,
  ConstantColumn,
  TooFewRows,
  KTooLarge,
  InvalidArgument,
  // regression / attribution
  DimensionMismatch,
  ZeroVariance,
  UntrainedModel,
  FeatureMismatch,
  EmptyBackground,
  // ontology
  SyntaxError,
  UndeclaredPrefix,
  UnboundHeadVariable,
  CyclicIsA,
  UnknownTerm,
  // graphstore / explain
  UnknownTract,
  TractNotInTable,
  UnmappedFeature,
  UnknownRelation,
  UnknownNode,
  UnknownEdge,
  UnknownFact,
  InferenceOverflow,
  // gateway
  BadRequest,
  WorkspaceMissing,
  UnknownReport,
  BindFailure,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::BadGeoCode: return "BadGeoCode";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::DuplicateGeoCode: return "DuplicateGeoCode";
    case ErrorCode::MissingBinding: return "MissingBinding";
    case ErrorCode::LevelMismatch: return "LevelMismatch";
    case ErrorCode::ColumnNameCollision: return "ColumnNameCollision";
    case ErrorCode::EmptyJoin: return "EmptyJoin";
    case ErrorCode::UnknownZip: return "UnknownZip";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::InsufficientRows: return "InsufficientRows";
    case ErrorCode::ConstantColumn: return "ConstantColumn";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::UntrainedModel: return "UntrainedModel";
    case ErrorCode::FeatureMismatch: return "FeatureMismatch";
    case ErrorCode::EmptyBackground: return "EmptyBackground";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UndeclaredPrefix: return "UndeclaredPrefix";
    case ErrorCode::UnboundHeadVariable: return "UnboundHeadVariable";
    case ErrorCode::CyclicIsA: return "CyclicIsA";
    case ErrorCode::UnknownTerm: return "UnknownTerm";
    case ErrorCode::UnknownTract: return "UnknownTract";
    case ErrorCode::TractNotInTable: return "TractNotInTable";
    case ErrorCode::UnmappedFeature: return "UnmappedFeature";
    case ErrorCode::UnknownRelation: return "UnknownRelation";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownEdge: return "UnknownEdge";
    case ErrorCode::UnknownFact: return "UnknownFact";
    case ErrorCode::InferenceOverflow: return "InferenceOverflow";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::WorkspaceMissing: return "WorkspaceMissing";
    case ErrorCode::UnknownReport: return "UnknownReport";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as this exception. `stage` is filled
/// in by the analysis pipeline so callers can tell which step failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string stage = {})
      : std::runtime_error(compose(code, message, stage)),
        code_(code),
        detail_(message),
        stage_(std::move(stage)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  const std::string& stage() const noexcept { return stage_; }

  Error with_stage(std::string stage) const { return Error(code_, detail_, std::move(stage)); }

 private:
  static std::string compose(ErrorCode code, const std::string& message, const std::string& stage) {
    std::string out;
    if (!stage.empty()) out += "[" + stage + "] ";
    out += std::string(to_string(code));
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorCode code_;
  std::string detail_;
  std::string stage_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message = {}) {
  throw Error(code, message);
}

}  // namespace upho
