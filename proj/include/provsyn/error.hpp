#pragma once

#include <stdexcept>
#include <string>

namespace provsyn {

enum class ErrorCode {
  // graph-core
  UnknownType,
  EmptyName,
  ManifestMismatch,
  IoFailure,
  MalformedFile,
  // dfs-codec
  Disconnected,
  TooLarge,
  SelfLoop,
  InvalidCode,
  // struct-model
  VocabularyOverflow,
  EmptyCorpus,
  DegenerateSample,
  // name-synth
  EmptyTrainingNames,
  InsufficientSequences,
  BackendFailure,
  LengthMismatch,
  Transport,
  ParseFailure,
  RateLimited,
  // metrics
  EmptySet,
  MissingType,
  NoSequences,
  // semantic-validator
  UnnamedNodes,
  NonFiniteLoss,
  // pipeline
  InvalidConfig,
  InsufficientGraphs,
};

const char* to_string(ErrorCode code) noexcept;

/// True for errors caused by bad input or configuration rather than by a
/// failure while doing the work. The CLI maps these to exit code 2.
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace provsyn
