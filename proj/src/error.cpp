#include "refgame/error.hpp"

namespace refgame {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyPhrase: return "EmptyPhrase";
    case ErrorCode::ReservedToken: return "ReservedToken";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicatePairId: return "DuplicatePairId";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::InvalidWorld: return "InvalidWorld";
    case ErrorCode::InfeasibleWorld: return "InfeasibleWorld";
    case ErrorCode::UnknownSlotValue: return "UnknownSlotValue";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VocabMismatch: return "VocabMismatch";
    case ErrorCode::EmptyBeam: return "EmptyBeam";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::MissingRanks: return "MissingRanks";
    case ErrorCode::IncompletePanel: return "IncompletePanel";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::EmptyCategory: return "EmptyCategory";
    case ErrorCode::UnknownCommand: return "UnknownCommand";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InsufficientTasks: return "InsufficientTasks";
    case ErrorCode::DuplicateAnswer: return "DuplicateAnswer";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::IncompletePanels: return "IncompletePanels";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace refgame
