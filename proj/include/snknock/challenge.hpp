#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace snknock {

using Clock = std::chrono::system_clock;
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

Timestamp now();

/// "2026-10-15T17:22:00.123Z"
std::string format_iso8601(Timestamp t);

enum class Language { en, ar };

std::string_view to_string(Language lang);
/// Throws UnsupportedLanguage for anything but "en" / "ar".
Language parse_language(std::string_view text);

enum class Decision { pending, accepted, rejected };

std::string_view to_string(Decision d);
std::optional<Decision> parse_decision(std::string_view text);

inline constexpr std::size_t kMaxQuestionLines = 20;
inline constexpr std::size_t kMaxQuestionLineLength = 500;

struct ChallengeRecord {
  std::optional<std::int64_t> id;  // unset until the store assigns one
  std::string owner_email;
  std::vector<std::string> question_lines;
  Language language = Language::en;
  Timestamp created_at{};

  bool operator==(const ChallengeRecord&) const = default;
};

struct AnswerRecord {
  std::optional<std::int64_t> id;
  std::int64_t challenge_id = 0;
  std::string audio_name;
  std::string media_type;
  std::uint64_t size_bytes = 0;
  Timestamp submitted_at{};
  Decision decision = Decision::pending;
  std::optional<Timestamp> decided_at;
  bool notified = false;

  bool operator==(const AnswerRecord&) const = default;
};

struct AudioBlob {
  std::string bytes;
  std::string media_type;

  bool operator==(const AudioBlob&) const = default;
};

/// One "@", non-empty local part and domain, no whitespace or control chars.
bool is_valid_email(std::string_view email);

/// Builds an unpersisted challenge. Lines keep input order and content;
/// only the emptiness check trims.
ChallengeRecord new_challenge(std::string_view owner_email,
                              const std::vector<std::string>& question_lines,
                              Language language);

/// Joins with a single LF, no trailing separator.
std::string serialize_questions(const std::vector<std::string>& lines);

/// Splits on CRLF, LF or CR. Interior empty lines are kept; one trailing
/// empty segment (text ending in a line break) is dropped.
std::vector<std::string> split_questions(std::string_view stored);

std::string build_answer_url(std::string_view base_url, Language language,
                             std::int64_t code);

const std::vector<std::string>& suggested_questions(Language language);
/// String-keyed overload for callers holding a raw language tag.
const std::vector<std::string>& suggested_questions(std::string_view language);

/// "answerfile_" + 32 lowercase hex digits from 128 bits of `rng`.
std::string new_answer_name(std::mt19937_64& rng);
bool is_valid_answer_name(std::string_view name);

/// One-shot transition out of pending. Throws AlreadyDecided otherwise.
AnswerRecord decide_answer(const AnswerRecord& record, Decision verdict,
                           Timestamp at);

}  // namespace snknock
