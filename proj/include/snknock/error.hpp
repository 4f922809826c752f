#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace snknock {

enum class ErrorCode {
  InvalidEmail,
  EmptyQuestions,
  TooManyQuestions,
  InvalidQuestion,
  UnsupportedLanguage,
  AlreadyDecided,
  NotFound,
  ChallengeNotFound,
  BlobTooLarge,
  EmptyBlob,
  StorageFailure,
  InvalidTransition,
  MismatchedAnswer,
  TransportFailure,
  InvalidPlan,
  UnknownAccount,
  TooLarge,
  NotEnumerable,
  ConfigError,
  ParseError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (gateway, CLI) can map it onto a status or exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace snknock
