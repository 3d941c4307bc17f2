#include "provsyn/error.hpp"

namespace provsyn {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::EmptyName: return "EmptyName";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::InvalidCode: return "InvalidCode";
    case ErrorCode::VocabularyOverflow: return "VocabularyOverflow";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::EmptyTrainingNames: return "EmptyTrainingNames";
    case ErrorCode::InsufficientSequences: return "InsufficientSequences";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::MissingType: return "MissingType";
    case ErrorCode::NoSequences: return "NoSequences";
    case ErrorCode::UnnamedNodes: return "UnnamedNodes";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InsufficientGraphs: return "InsufficientGraphs";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownType:
    case ErrorCode::EmptyName:
    case ErrorCode::ManifestMismatch:
    case ErrorCode::MalformedFile:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InsufficientGraphs:
    case ErrorCode::MissingType:
    case ErrorCode::VocabularyOverflow:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace provsyn
