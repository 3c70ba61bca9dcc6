#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agentseval {

enum class ErrorKind {
  EmptyReport,
  InvalidErrorCount,
  InvalidArgument,
  EmptyInput,
  DimensionMismatch,
  LengthMismatch,
  DegenerateSeries,
  EvenWindow,
  Transport,
  Auth,
  EmptyCompletion,
  FeatureUnavailable,
  MissingFixture,
  UnparseableOutput,
  EmptyPool,
  EmptyCriteria,
  KeySetMismatch,
  OutOfRange,
  ZeroTotalWeight,
  AllSamplesFailed,
  Io,
  SchemaViolation,
  Integrity,
  EmptyRewrite,
  Template,
  Config,
  MissingErrorCounts,
  SampleNotFound,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyReport: return "EmptyReport";
    case ErrorKind::InvalidErrorCount: return "InvalidErrorCount";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DegenerateSeries: return "DegenerateSeries";
    case ErrorKind::EvenWindow: return "EvenWindow";
    case ErrorKind::Transport: return "TransportError";
    case ErrorKind::Auth: return "AuthError";
    case ErrorKind::EmptyCompletion: return "EmptyCompletion";
    case ErrorKind::FeatureUnavailable: return "FeatureUnavailable";
    case ErrorKind::MissingFixture: return "MissingFixture";
    case ErrorKind::UnparseableOutput: return "UnparseableOutput";
    case ErrorKind::EmptyPool: return "EmptyPool";
    case ErrorKind::EmptyCriteria: return "EmptyCriteria";
    case ErrorKind::KeySetMismatch: return "KeySetMismatch";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::ZeroTotalWeight: return "ZeroTotalWeight";
    case ErrorKind::AllSamplesFailed: return "AllSamplesFailed";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::Integrity: return "IntegrityError";
    case ErrorKind::EmptyRewrite: return "EmptyRewrite";
    case ErrorKind::Template: return "TemplateError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::MissingErrorCounts: return "MissingErrorCounts";
    case ErrorKind::SampleNotFound: return "SampleNotFound";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix that what() carries.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

/// An agent failure tagged with the pipeline stage and sample that produced it.
class StageError : public Error {
 public:
  StageError(const Error& cause, std::string stage, std::string sample_id)
      : Error(cause.kind(), "stage '" + stage + "' sample '" + sample_id + "': " + cause.message()),
        stage_(std::move(stage)),
        sample_id_(std::move(sample_id)) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& sample_id() const noexcept { return sample_id_; }

 private:
  std::string stage_;
  std::string sample_id_;
};

}  // namespace agentseval
