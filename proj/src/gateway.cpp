#include "snknock/gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>

#include <json.hpp>

#include "snknock/digest.hpp"
#include "snknock/error.hpp"

namespace snknock {

using nlohmann::json;

namespace {

constexpr std::string_view kProfileMessageEn =
    "Please, to be my friend, send the friend request then click on this link and "
    "answer my questions using your voice. I do this to avoid fake accounts and "
    "profile cloning attacks.";
constexpr std::string_view kProfileMessageAr =
    "من فضلك، لكي تكون صديقي أرسل طلب الصداقة ثم اضغط على هذا الرابط وأجب عن "
    "أسئلتي بصوتك. أفعل ذلك لتجنب الحسابات المزيفة وهجمات استنساخ الحسابات.";

std::string_view profile_message(Language lang) {
  return lang == Language::ar ? kProfileMessageAr : kProfileMessageEn;
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidEmail:
    case ErrorCode::EmptyQuestions:
    case ErrorCode::TooManyQuestions:
    case ErrorCode::InvalidQuestion:
    case ErrorCode::EmptyBlob:
      return 400;
    case ErrorCode::NotFound:
    case ErrorCode::ChallengeNotFound:
    case ErrorCode::UnsupportedLanguage:
      return 404;
    case ErrorCode::BlobTooLarge:
      return 413;
    case ErrorCode::AlreadyDecided:
    case ErrorCode::InvalidTransition:
      return 409;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind,
                std::string_view message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

void send_error(httplib::Response& res, const Error& e) {
  send_error(res, status_for(e.code()), to_string(e.code()), e.what());
}

bool wants_html(const httplib::Request& req) {
  const auto accept = req.get_header_value("Accept");
  return accept.find("text/html") != std::string::npos &&
         accept.find("application/json") == std::string::npos;
}

std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string html_page(Language lang, std::string_view title, std::string_view body) {
  std::string out = "<!DOCTYPE html>\n<html lang=\"";
  out += to_string(lang);
  out += "\" dir=\"";
  out += lang == Language::ar ? "rtl" : "ltr";
  out += "\"><head><meta charset=\"utf-8\"><title>";
  out += html_escape(title);
  out += "</title></head><body>\n";
  out += body;
  out += "\n</body></html>\n";
  return out;
}

/// Form field from a urlencoded body, query string, or a multipart text part.
std::optional<std::string> field(const httplib::Request& req, const std::string& name) {
  if (req.has_param(name)) return req.get_param_value(name);
  if (req.has_file(name)) return req.get_file_value(name).content;
  if (req.get_header_value("Content-Type").starts_with("application/json")) {
    const auto j = json::parse(req.body, nullptr, false);
    if (j.is_object() && j.contains(name) && j.at(name).is_string())
      return j.at(name).get<std::string>();
  }
  return std::nullopt;
}

std::optional<std::int64_t> parse_id(std::string_view text) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

std::optional<Language> language_segment(std::string_view seg) {
  if (seg == "en") return Language::en;
  if (seg == "ar") return Language::ar;
  return std::nullopt;
}

std::string owner_token_of(const httplib::Request& req) {
  if (req.has_header("X-Owner-Token")) return req.get_header_value("X-Owner-Token");
  const auto auth = req.get_header_value("Authorization");
  constexpr std::string_view kBearer = "Bearer ";
  if (auth.starts_with(kBearer)) return auth.substr(kBearer.size());
  return {};
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

json answer_summary(const AnswerRecord& a, std::string_view base_url) {
  json j = {
      {"answer_id", *a.id},
      {"challenge_id", a.challenge_id},
      {"audio_name", a.audio_name},
      {"audio_url", audio_url(base_url, a.audio_name)},
      {"media_type", a.media_type},
      {"size_bytes", a.size_bytes},
      {"submitted_at", format_iso8601(a.submitted_at)},
      {"decision", to_string(a.decision)},
      {"decided_at", nullptr},
      {"notified", a.notified},
  };
  if (a.decided_at) j["decided_at"] = format_iso8601(*a.decided_at);
  return j;
}

}  // namespace

bool RateLimiter::allow(const std::string& source, SteadyClock::time_point at) {
  if (capacity_ == 0) return true;
  std::lock_guard lock(mutex_);
  auto [it, inserted] = buckets_.try_emplace(source, Bucket{static_cast<double>(capacity_), at});
  Bucket& b = it->second;
  if (!inserted && at > b.last) {
    const double hours = std::chrono::duration<double>(at - b.last).count() / 3600.0;
    b.tokens = std::min<double>(capacity_, b.tokens + hours * capacity_);
    b.last = at;
  }
  if (b.tokens < 1.0) return false;
  b.tokens -= 1.0;
  return true;
}

Gateway::Gateway(GatewayConfig config, Store& store, Transport& transport)
    : config_(std::move(config)),
      store_(store),
      transport_(transport),
      server_(std::make_unique<httplib::Server>()),
      limiter_(config_.uploads_per_hour) {
  std::random_device rd;
  std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd(), rd(), rd()};
  rng_.seed(seq);
  // Multipart framing adds a little on top of the audio part itself; the
  // exact cap is enforced on the part below.
  server_->set_payload_max_length(config_.max_upload_bytes + 64 * 1024);
  // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which would let
  // a second instance bind the same port and silently split traffic.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  install_routes();
}

Gateway::~Gateway() { stop(); }

int Gateway::bind() {
  std::pair<std::string, int> hp;
  try {
    hp = split_bind_address(config_.bind_address);
  } catch (const Error&) {
    return -1;
  }
  auto [host, port] = hp;
  if (port < 0 || port > 65535) return -1;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  return port_;
}

bool Gateway::listen() { return server_->listen_after_bind(); }

void Gateway::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void Gateway::wait_until_ready() const { server_->wait_until_ready(); }

std::string Gateway::next_answer_name() {
  std::lock_guard lock(rng_mutex_);
  return new_answer_name(rng_);
}

void Gateway::install_routes() {
  auto& srv = *server_;
  const std::string base = config_.public_base_url;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                               std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  });

  srv.Get("/", [this](const httplib::Request& req, httplib::Response& res) {
    Language lang = config_.language_default;
    if (auto l = req.has_param("lang") ? language_segment(req.get_param_value("lang")) : std::nullopt)
      lang = *l;
    std::string body = "<h1>SNKnock</h1>\n<form method=\"post\" action=\"/challenges\">\n";
    body += "<input type=\"hidden\" name=\"language\" value=\"" + std::string(to_string(lang)) + "\">\n";
    body += "<p><input type=\"email\" name=\"user_email\" required></p>\n";
    body += "<p><textarea name=\"user_questions\" rows=\"6\" cols=\"60\"></textarea></p>\n<ul>\n";
    for (const auto& q : suggested_questions(lang)) body += "<li>" + html_escape(q) + "</li>\n";
    body += "</ul>\n<p><button type=\"submit\">Generate Hyperlink</button></p>\n</form>\n";
    body += lang == Language::ar ? "<p><a href=\"/?lang=en\">English</a></p>"
                                 : "<p><a href=\"/?lang=ar\">العربية</a></p>";
    res.set_content(html_page(lang, "SNKnock", body), "text/html; charset=utf-8");
  });

  srv.Get(R"(/(\w+)/suggestions)", [](const httplib::Request& req, httplib::Response& res) {
    const auto lang = language_segment(req.matches[1].str());
    if (!lang) return send_error(res, 404, "NotFound", "unknown language segment");
    send_json(res, 200, {{"language", to_string(*lang)}, {"suggestions", suggested_questions(*lang)}});
  });

  srv.Post("/challenges", [this, base](const httplib::Request& req, httplib::Response& res) {
    const auto email = field(req, "user_email");
    const auto questions = field(req, "user_questions");
    if (!email) return send_error(res, 400, "MissingField", "user_email is required");
    if (!questions) return send_error(res, 400, "MissingField", "user_questions is required");
    Language lang = config_.language_default;
    if (auto l = field(req, "language")) {
      auto parsed = language_segment(*l);
      if (!parsed) return send_error(res, 400, "UnsupportedLanguage", "language must be en or ar");
      lang = *parsed;
    }

    std::vector<std::string> lines;
    for (auto& line : split_questions(*questions))
      if (!is_blank(line)) lines.push_back(std::move(line));

    ChallengeRecord rec;
    try {
      rec = new_challenge(*email, lines, lang);
    } catch (const Error& e) {
      return send_error(res, 400, to_string(e.code()), e.what());
    }
    const std::string token = random_token_hex(16);
    rec = store_.put_challenge(std::move(rec), token);
    const std::string link = build_answer_url(base, lang, *rec.id);

    if (wants_html(req)) {
      std::string body = "<p>Generated link : <a href=\"" + html_escape(link) + "\">" +
                         html_escape(link) + "</a></p>\n<p>" +
                         html_escape(profile_message(lang)) + "</p>\n<p>Owner token: <code>" +
                         token + "</code></p>";
      res.status = 200;
      res.set_content(html_page(lang, "SNKnock", body), "text/html; charset=utf-8");
      return;
    }
    send_json(res, 200,
              {{"challenge_id", *rec.id},
               {"link", link},
               {"owner_token", token},
               {"language", to_string(lang)},
               {"profile_message", profile_message(lang)}});
  });

  srv.Get(R"(/(\w+)/answer)", [this, base](const httplib::Request& req, httplib::Response& res) {
    const auto lang = language_segment(req.matches[1].str());
    if (!lang) return send_error(res, 404, "NotFound", "unknown language segment");
    if (!req.has_param("code")) return send_error(res, 400, "BadRequest", "code is required");
    const auto code = parse_id(req.get_param_value("code"));
    if (!code) return send_error(res, 400, "BadRequest", "code must be an integer");

    ChallengeRecord rec;
    try {
      rec = store_.get_challenge(*code);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) return send_error(res, 404, "NotFound", "unknown code");
      throw;
    }

    if (wants_html(req)) {
      std::string body;
      for (const auto& q : rec.question_lines) body += "<p>" + html_escape(q) + "</p>\n";
      body += "<form method=\"post\" action=\"/answers\" enctype=\"multipart/form-data\">\n";
      body += "<input type=\"hidden\" name=\"code\" value=\"" + std::to_string(*code) + "\">\n";
      body += "<input type=\"file\" name=\"audio\" accept=\"audio/*\" capture>\n";
      body += "<button type=\"submit\">send the answer</button>\n</form>";
      res.set_content(html_page(*lang, "SNKnock", body), "text/html; charset=utf-8");
      return;
    }
    send_json(res, 200,
              {{"code", *code},
               {"language", to_string(*lang)},
               {"questions", rec.question_lines},
               {"upload_endpoint", base + "/answers"}});
  });

  srv.Post("/answers", [this, base](const httplib::Request& req, httplib::Response& res) {
    if (!limiter_.allow(req.remote_addr))
      return send_error(res, 429, "RateLimited", "too many uploads from this address");

    const auto code_text = field(req, "code");
    if (!code_text) return send_error(res, 400, "MissingField", "code is required");
    const auto code = parse_id(*code_text);
    if (!code) return send_error(res, 400, "BadRequest", "code must be an integer");
    if (!req.has_file("audio")) return send_error(res, 400, "MissingField", "audio part is required");
    const auto audio = req.get_file_value("audio");

    ChallengeRecord challenge;
    try {
      challenge = store_.get_challenge(*code);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) return send_error(res, 404, "NotFound", "unknown code");
      throw;
    }
    if (!audio.content_type.starts_with("audio/"))
      return send_error(res, 415, "UnsupportedMediaType", "audio part must have an audio/* type");
    if (audio.content.size() > config_.max_upload_bytes)
      return send_error(res, 413, "BlobTooLarge", "audio exceeds the upload cap");
    if (audio.content.empty()) return send_error(res, 400, "EmptyBlob", "audio part is empty");

    AnswerRecord answer;
    answer.challenge_id = *code;
    answer.audio_name = next_answer_name();
    answer.submitted_at = now();
    try {
      answer = store_.put_answer(std::move(answer), AudioBlob{audio.content, audio.content_type});
    } catch (const Error& e) {
      return send_error(res, e);
    }

    bool notified = false;
    try {
      transport_.send(compose_notification(challenge, answer, base));
      store_.set_notified(*answer.id, true);
      notified = true;
    } catch (const Error&) {
      // Stored but unnotified; `snknock notify-retry` resends.
    }

    if (wants_html(req)) {
      res.set_content(html_page(challenge.language, "SNKnock", "<p>OK</p>"),
                      "text/html; charset=utf-8");
      return;
    }
    send_json(res, 200,
              {{"answer_id", *answer.id}, {"audio_name", answer.audio_name}, {"notified", notified}});
  });

  srv.Get(R"(/audio/(.*))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string name = req.matches[1].str();
    if (!is_valid_answer_name(name))
      return send_error(res, 400, "BadRequest", "malformed audio name");
    AudioBlob blob;
    try {
      blob = store_.get_blob(name);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) return send_error(res, 404, "NotFound", "unknown audio");
      throw;
    }
    res.status = 200;
    res.set_content(std::move(blob.bytes), blob.media_type);
  });

  srv.Get(R"(/challenges/(\d+)/answers)", [this, base](const httplib::Request& req,
                                                        httplib::Response& res) {
    const auto id = parse_id(req.matches[1].str());
    std::vector<AnswerRecord> answers;
    try {
      answers = store_.list_answers(id.value_or(0));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ChallengeNotFound)
        return send_error(res, 404, "NotFound", "unknown challenge");
      throw;
    }
    if (config_.owner_token_required && !store_.check_owner_token(*id, owner_token_of(req)))
      return send_error(res, 401, "Unauthorized", "owner token missing or wrong");
    json list = json::array();
    for (const auto& a : answers) list.push_back(answer_summary(a, base));
    send_json(res, 200, {{"challenge_id", *id}, {"answers", list}});
  });

  srv.Post(R"(/answers/(\d+)/decision)", [this, base](const httplib::Request& req,
                                                       httplib::Response& res) {
    const auto id = parse_id(req.matches[1].str());
    AnswerRecord answer;
    try {
      answer = store_.get_answer(id.value_or(0));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) return send_error(res, 404, "NotFound", "unknown answer");
      throw;
    }
    if (config_.owner_token_required &&
        !store_.check_owner_token(answer.challenge_id, owner_token_of(req)))
      return send_error(res, 401, "Unauthorized", "owner token missing or wrong");

    const auto verdict_text = field(req, "verdict");
    const auto verdict = verdict_text ? parse_decision(*verdict_text) : std::nullopt;
    if (!verdict || *verdict == Decision::pending)
      return send_error(res, 400, "BadRequest", "verdict must be accepted or rejected");

    try {
      answer = decide_answer(answer, *verdict, now());
      store_.update_answer_decision(answer);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::AlreadyDecided || e.code() == ErrorCode::InvalidTransition)
        return send_error(res, 409, "AlreadyDecided", e.what());
      throw;
    }
    send_json(res, 200, answer_summary(answer, base));
  });

  srv.Get("/admin/challenges", [this](const httplib::Request&, httplib::Response& res) {
    if (!config_.admin_listing_enabled) return send_error(res, 404, "NotFound", "not enabled");
    json list = json::array();
    for (const auto& c : store_.list_challenges())
      list.push_back({{"challenge_id", *c.id},
                      {"owner_email", c.owner_email},
                      {"language", to_string(c.language)},
                      {"question_count", c.question_lines.size()},
                      {"created_at", format_iso8601(c.created_at)}});
    send_json(res, 200, {{"challenges", list}});
  });
}

}  // namespace snknock
