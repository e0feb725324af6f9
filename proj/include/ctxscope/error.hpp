#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctxscope {

enum class ErrorKind {
  MalformedConversation,
  SequenceTooLong,
  TokenOutOfVocab,
  EmptyLossMask,
  EmptyCorpus,
  DegenerateRow,
  EmptyUserMask,
  InvalidGrid,
  HaystackTooShort,
  EmptyKeywordSet,
  EmptyResponse,
  NoUserTokens,
  MissingScores,
  ParseError,
  EmptyAnswerSet,
  EmptyCaseSet,
  MismatchedTurnSets,
  MismatchedEvalSets,
  CorruptArtifact,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Domain error carrying a machine-readable kind. The CLI maps these to exit
// code 1 and a one-line JSON diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace ctxscope
