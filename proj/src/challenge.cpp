#include "snknock/challenge.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <ctime>

#include "snknock/error.hpp"

namespace snknock {

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

const std::vector<std::string> kSuggestionsEn = {
    "Talk to me about yourself?",
    "Talk to me about myself?",
    "Talk to me about our relationship?",
    "Talk to me about our friendship?",
    "What is your name?",
    "What is your SN Account Name?",
    "What is your country & city?",
    "What is your job?",
    "How old are you?",
    "What is my job?",
    "How many children I have?",
};

const std::vector<std::string> kSuggestionsAr = {
    "حدثني عن نفسك؟",
    "حدثني عني؟",
    "حدثني عن علاقتنا؟",
    "حدثني عن صداقتنا؟",
    "ما اسمك؟",
    "ما اسم حسابك على الشبكة الاجتماعية؟",
    "ما هي دولتك ومدينتك؟",
    "ما هي وظيفتك؟",
    "كم عمرك؟",
    "ما هي وظيفتي؟",
    "كم عدد أطفالي؟",
};

constexpr std::string_view kAnswerPrefix = "answerfile_";

}  // namespace

Timestamp now() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(Clock::now());
}

std::string format_iso8601(Timestamp t) {
  const auto secs = std::chrono::floor<std::chrono::seconds>(t);
  const auto ms = (t - secs).count();
  const std::time_t tt = secs.time_since_epoch().count();
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms));
  return buf;
}

std::string_view to_string(Language lang) {
  return lang == Language::ar ? "ar" : "en";
}

Language parse_language(std::string_view text) {
  if (text == "en") return Language::en;
  if (text == "ar") return Language::ar;
  throw Error(ErrorCode::UnsupportedLanguage,
              "unsupported language '" + std::string(text) + "'");
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::pending: return "pending";
    case Decision::accepted: return "accepted";
    case Decision::rejected: return "rejected";
  }
  return "pending";
}

std::optional<Decision> parse_decision(std::string_view text) {
  if (text == "pending") return Decision::pending;
  if (text == "accepted") return Decision::accepted;
  if (text == "rejected") return Decision::rejected;
  return std::nullopt;
}

bool is_valid_email(std::string_view email) {
  const auto at = email.find('@');
  if (at == std::string_view::npos || email.find('@', at + 1) != std::string_view::npos)
    return false;
  if (at == 0 || at + 1 == email.size()) return false;
  return std::none_of(email.begin(), email.end(), [](unsigned char c) {
    return std::isspace(c) != 0 || std::iscntrl(c) != 0;
  });
}

ChallengeRecord new_challenge(std::string_view owner_email,
                              const std::vector<std::string>& question_lines,
                              Language language) {
  if (!is_valid_email(owner_email))
    throw Error(ErrorCode::InvalidEmail,
                "invalid email address '" + std::string(owner_email) + "'");
  if (question_lines.empty())
    throw Error(ErrorCode::EmptyQuestions, "at least one question is required");
  if (question_lines.size() > kMaxQuestionLines)
    throw Error(ErrorCode::TooManyQuestions,
                "at most " + std::to_string(kMaxQuestionLines) + " questions allowed");
  for (const auto& line : question_lines) {
    if (is_blank(line))
      throw Error(ErrorCode::EmptyQuestions, "question lines must not be blank");
    if (line.size() > kMaxQuestionLineLength)
      throw Error(ErrorCode::InvalidQuestion,
                  "question line exceeds " + std::to_string(kMaxQuestionLineLength) +
                      " characters");
    if (line.find_first_of("\r\n") != std::string::npos)
      throw Error(ErrorCode::InvalidQuestion,
                  "a question line must not contain line breaks");
  }

  ChallengeRecord rec;
  rec.owner_email = std::string(owner_email);
  rec.question_lines = question_lines;
  rec.language = language;
  rec.created_at = now();
  return rec;
}

std::string serialize_questions(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

std::vector<std::string> split_questions(std::string_view stored) {
  std::vector<std::string> lines;
  if (stored.empty()) return lines;
  std::string current;
  bool ended_with_break = false;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const char c = stored[i];
    if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < stored.size() && stored[i + 1] == '\n') ++i;
      lines.push_back(std::move(current));
      current.clear();
      ended_with_break = true;
    } else {
      current += c;
      ended_with_break = false;
    }
  }
  if (!ended_with_break) lines.push_back(std::move(current));
  return lines;
}

std::string build_answer_url(std::string_view base_url, Language language,
                             std::int64_t code) {
  std::string url(base_url);
  url += '/';
  url += to_string(language);
  url += "/answer?code=";
  url += std::to_string(code);
  return url;
}

const std::vector<std::string>& suggested_questions(Language language) {
  return language == Language::ar ? kSuggestionsAr : kSuggestionsEn;
}

const std::vector<std::string>& suggested_questions(std::string_view language) {
  return suggested_questions(parse_language(language));
}

std::string new_answer_name(std::mt19937_64& rng) {
  static constexpr std::array<char, 16> kHex = {'0', '1', '2', '3', '4', '5', '6', '7',
                                                '8', '9', 'a', 'b', 'c', 'd', 'e', 'f'};
  std::string name(kAnswerPrefix);
  for (int word = 0; word < 2; ++word) {
    const std::uint64_t bits = rng();
    for (int shift = 60; shift >= 0; shift -= 4) name += kHex[(bits >> shift) & 0xF];
  }
  return name;
}

bool is_valid_answer_name(std::string_view name) {
  if (name.size() != kAnswerPrefix.size() + 32) return false;
  if (name.substr(0, kAnswerPrefix.size()) != kAnswerPrefix) return false;
  return std::all_of(name.begin() + kAnswerPrefix.size(), name.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

AnswerRecord decide_answer(const AnswerRecord& record, Decision verdict,
                           Timestamp at) {
  if (verdict == Decision::pending)
    throw Error(ErrorCode::InvalidTransition, "verdict must be accepted or rejected");
  if (record.decision != Decision::pending)
    throw Error(ErrorCode::AlreadyDecided,
                "answer already " + std::string(to_string(record.decision)));
  AnswerRecord updated = record;
  updated.decision = verdict;
  updated.decided_at = at;
  return updated;
}

}  // namespace snknock
