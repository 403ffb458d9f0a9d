#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace refgame {

// Machine-readable failure kinds. The service reports these names verbatim.
enum class ErrorCode {
  EmptyPhrase,
  ReservedToken,
  EmptyCorpus,
  ParseError,
  DuplicatePairId,
  InvalidRecord,
  InvalidWorld,
  InfeasibleWorld,
  UnknownSlotValue,
  ShapeMismatch,
  NonFiniteGradient,
  ManifestMismatch,
  IoError,
  VocabMismatch,
  EmptyBeam,
  EmptyGrid,
  MissingRanks,
  IncompletePanel,
  KTooLarge,
  DegenerateLabels,
  EmptyQuery,
  EmptyCategory,
  UnknownCommand,
  ConfigError,
  InsufficientTasks,
  DuplicateAnswer,
  UnknownTask,
  UnknownSession,
  SessionClosed,
  IncompletePanels,
  InvalidArgument,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace refgame
