#include "snknock/error.hpp"

namespace snknock {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidEmail: return "InvalidEmail";
    case ErrorCode::EmptyQuestions: return "EmptyQuestions";
    case ErrorCode::TooManyQuestions: return "TooManyQuestions";
    case ErrorCode::InvalidQuestion: return "InvalidQuestion";
    case ErrorCode::UnsupportedLanguage: return "UnsupportedLanguage";
    case ErrorCode::AlreadyDecided: return "AlreadyDecided";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ChallengeNotFound: return "ChallengeNotFound";
    case ErrorCode::BlobTooLarge: return "BlobTooLarge";
    case ErrorCode::EmptyBlob: return "EmptyBlob";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::InvalidTransition: return "InvalidTransition";
    case ErrorCode::MismatchedAnswer: return "MismatchedAnswer";
    case ErrorCode::TransportFailure: return "TransportFailure";
    case ErrorCode::InvalidPlan: return "InvalidPlan";
    case ErrorCode::UnknownAccount: return "UnknownAccount";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NotEnumerable: return "NotEnumerable";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace snknock
