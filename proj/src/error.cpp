#include "ctxscope/error.hpp"

namespace ctxscope {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedConversation: return "MalformedConversation";
    case ErrorKind::SequenceTooLong: return "SequenceTooLong";
    case ErrorKind::TokenOutOfVocab: return "TokenOutOfVocab";
    case ErrorKind::EmptyLossMask: return "EmptyLossMask";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::DegenerateRow: return "DegenerateRow";
    case ErrorKind::EmptyUserMask: return "EmptyUserMask";
    case ErrorKind::InvalidGrid: return "InvalidGrid";
    case ErrorKind::HaystackTooShort: return "HaystackTooShort";
    case ErrorKind::EmptyKeywordSet: return "EmptyKeywordSet";
    case ErrorKind::EmptyResponse: return "EmptyResponse";
    case ErrorKind::NoUserTokens: return "NoUserTokens";
    case ErrorKind::MissingScores: return "MissingScores";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyAnswerSet: return "EmptyAnswerSet";
    case ErrorKind::EmptyCaseSet: return "EmptyCaseSet";
    case ErrorKind::MismatchedTurnSets: return "MismatchedTurnSets";
    case ErrorKind::MismatchedEvalSets: return "MismatchedEvalSets";
    case ErrorKind::CorruptArtifact: return "CorruptArtifact";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace ctxscope
