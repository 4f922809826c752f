#include "snknock/notify.hpp"

#include <curl/curl.h>
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <ctime>
#include <iomanip>
#include <fstream>
#include <iterator>
#include <sstream>

#include "snknock/error.hpp"

namespace snknock {

namespace fs = std::filesystem;

namespace {

struct EmailStrings {
  std::string_view greeting;
  std::string_view intro;  // "{id}" is replaced by the challenge id
  std::string_view questions;
  std::string_view listen;
  std::string_view decide;
};

constexpr EmailStrings kEmailEn{
    "Hello,",
    "Someone answered your SNKnock challenge {id} with a recorded voice message.",
    "Your questions:",
    "Listen to the answer:",
    "After listening, accept or reject the friend request.",
};

constexpr EmailStrings kEmailAr{
    "مرحبا،",
    "قام شخص بالإجابة على تحدي SNKnock رقم {id} برسالة صوتية مسجلة.",
    "أسئلتك:",
    "استمع إلى الإجابة:",
    "بعد الاستماع، قم بقبول طلب الصداقة أو رفضه.",
};

std::string replace_id(std::string_view text, std::int64_t id) {
  std::string out(text);
  const auto pos = out.find("{id}");
  if (pos != std::string::npos) out.replace(pos, 4, std::to_string(id));
  return out;
}

Timestamp truncate_seconds(Timestamp t) {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(
      std::chrono::floor<std::chrono::seconds>(t));
}

std::string format_rfc822_date(Timestamp t) {
  const std::time_t secs = std::chrono::duration_cast<std::chrono::seconds>(
                               t.time_since_epoch())
                               .count();
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "%a, %d %b %Y %H:%M:%S +0000", &tm);
  return buf;
}

Timestamp parse_rfc822_date(const std::string& text) {
  std::tm tm{};
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  in >> std::get_time(&tm, "%a, %d %b %Y %H:%M:%S");
  if (in.fail()) throw Error(ErrorCode::ParseError, "bad Date header '" + text + "'");
  const std::time_t secs = timegm(&tm);
  return Timestamp(std::chrono::seconds(secs));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::optional<std::uint64_t> sequence_of(const fs::path& path) {
  if (path.extension() != ".eml") return std::nullopt;
  const auto stem = path.stem().string();
  std::uint64_t seq = 0;
  const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), seq);
  if (ec != std::errc() || ptr != stem.data() + stem.size() || seq == 0) return std::nullopt;
  return seq;
}

[[noreturn]] void transport_fail(const std::string& what) {
  throw Error(ErrorCode::TransportFailure, what);
}

}  // namespace

std::string audio_url(std::string_view base_url, std::string_view audio_name) {
  std::string url(base_url);
  url += "/audio/";
  url += audio_name;
  return url;
}

EmailMessage compose_notification(const ChallengeRecord& challenge,
                                  const AnswerRecord& answer,
                                  std::string_view base_url) {
  if (!challenge.id || answer.challenge_id != *challenge.id)
    throw Error(ErrorCode::MismatchedAnswer,
                "answer belongs to challenge " + std::to_string(answer.challenge_id) +
                    ", not " + (challenge.id ? std::to_string(*challenge.id) : "<unsaved>"));

  const auto& s = challenge.language == Language::ar ? kEmailAr : kEmailEn;
  const auto id = *challenge.id;

  std::string body;
  body += s.greeting;
  body += "\n\n";
  body += replace_id(s.intro, id);
  body += "\n\n";
  body += s.questions;
  body += '\n';
  for (const auto& q : challenge.question_lines) {
    body += "- ";
    body += q;
    body += '\n';
  }
  body += '\n';
  body += s.listen;
  body += '\n';
  body += audio_url(base_url, answer.audio_name);
  body += "\n\n";
  body += s.decide;
  body += '\n';

  EmailMessage msg;
  msg.to = challenge.owner_email;
  msg.subject = "SNKnock: new voice answer for challenge " + std::to_string(id);
  msg.body_text = std::move(body);
  msg.created_at = truncate_seconds(now());
  return msg;
}

std::string render_eml(const EmailMessage& message, std::string_view from) {
  std::string out;
  if (!from.empty()) out += "From: " + std::string(from) + "\r\n";
  out += "To: " + message.to + "\r\n";
  out += "Subject: " + message.subject + "\r\n";
  out += "Date: " + format_rfc822_date(message.created_at) + "\r\n";
  out += "MIME-Version: 1.0\r\n";
  out += "Content-Type: text/plain; charset=UTF-8\r\n";
  out += "Content-Transfer-Encoding: 8bit\r\n";
  out += "\r\n";
  out += message.body_text;
  return out;
}

EmailMessage parse_eml(std::string_view text) {
  const auto split = text.find("\r\n\r\n");
  if (split == std::string_view::npos)
    throw Error(ErrorCode::ParseError, "message has no header/body separator");
  EmailMessage msg;
  bool have_to = false, have_subject = false, have_date = false;
  std::string_view headers = text.substr(0, split);
  while (!headers.empty()) {
    const auto eol = headers.find("\r\n");
    const auto line = headers.substr(0, eol);
    headers = eol == std::string_view::npos ? std::string_view{} : headers.substr(eol + 2);
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const auto name = line.substr(0, colon);
    auto value = line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    if (name == "To") {
      msg.to = value;
      have_to = true;
    } else if (name == "Subject") {
      msg.subject = value;
      have_subject = true;
    } else if (name == "Date") {
      msg.created_at = parse_rfc822_date(std::string(value));
      have_date = true;
    }
  }
  if (!have_to || !have_subject || !have_date)
    throw Error(ErrorCode::ParseError, "message lacks To, Subject or Date");
  msg.body_text = text.substr(split + 4);
  return msg;
}

FileOutbox::FileOutbox(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) transport_fail("create outbox " + dir_.string() + ": " + ec.message());
  for (const auto& entry : fs::directory_iterator(dir_, ec))
    if (auto seq = sequence_of(entry.path())) next_ = std::max(next_, *seq + 1);
}

std::string FileOutbox::file_name(std::uint64_t sequence) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llu.eml", static_cast<unsigned long long>(sequence));
  return buf;
}

DeliveryReceipt FileOutbox::send(const EmailMessage& message) {
  const std::string content = render_eml(message);
  std::lock_guard lock(mutex_);

  const fs::path temp = dir_ / (".pending-" + std::to_string(::getpid()) + ".tmp");
  {
    const int fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) transport_fail("outbox write " + temp.string() + ": " + std::strerror(errno));
    std::size_t written = 0;
    bool ok = true;
    while (written < content.size()) {
      const ssize_t n = ::write(fd, content.data() + written, content.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        ok = false;
        break;
      }
      written += static_cast<std::size_t>(n);
    }
    ok = ok && ::fsync(fd) == 0;
    ::close(fd);
    if (!ok) {
      ::unlink(temp.c_str());
      transport_fail("outbox write " + temp.string() + " failed");
    }
  }

  // link() refuses to overwrite, so another process that claimed the same
  // sequence just pushes us to the next free number.
  for (;;) {
    const fs::path target = dir_ / file_name(next_);
    if (::link(temp.c_str(), target.c_str()) == 0) break;
    if (errno != EEXIST) {
      const int err = errno;
      ::unlink(temp.c_str());
      transport_fail("outbox link " + target.string() + ": " + std::strerror(err));
    }
    ++next_;
  }
  ::unlink(temp.c_str());
  DeliveryReceipt receipt;
  receipt.sequence = next_++;
  return receipt;
}

std::vector<OutboxEntry> FileOutbox::list() const {
  std::vector<std::uint64_t> seqs;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir_, ec))
    if (auto seq = sequence_of(entry.path())) seqs.push_back(*seq);
  std::sort(seqs.begin(), seqs.end());
  std::vector<OutboxEntry> out;
  out.reserve(seqs.size());
  for (auto seq : seqs) out.push_back(read(seq));
  return out;
}

OutboxEntry FileOutbox::read(std::uint64_t sequence) const {
  const auto path = dir_ / file_name(sequence);
  if (!fs::exists(path))
    throw Error(ErrorCode::NotFound, "no outbox entry " + std::to_string(sequence));
  return OutboxEntry{sequence, parse_eml(read_file(path)), true};
}

SmtpTransport::SmtpTransport(SmtpConfig config) : config_(std::move(config)) {
  static const bool curl_ready = [] { return curl_global_init(CURL_GLOBAL_DEFAULT) == 0; }();
  if (!curl_ready) transport_fail("libcurl initialisation failed");
}

namespace {

struct Payload {
  std::string data;
  std::size_t offset = 0;
};

std::size_t read_payload(char* buffer, std::size_t size, std::size_t nitems, void* user) {
  auto* p = static_cast<Payload*>(user);
  const std::size_t n = std::min(size * nitems, p->data.size() - p->offset);
  std::memcpy(buffer, p->data.data() + p->offset, n);
  p->offset += n;
  return n;
}

}  // namespace

DeliveryReceipt SmtpTransport::send(const EmailMessage& message) {
  if (config_.host.empty()) transport_fail("no mail relay configured");
  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(),
                                                          &curl_easy_cleanup);
  if (!curl) transport_fail("curl_easy_init failed");

  Payload payload{render_eml(message, config_.sender), 0};
  const std::string url = (config_.use_tls ? "smtps://" : "smtp://") + config_.host + ":" +
                          std::to_string(config_.port);
  const std::string from = "<" + config_.sender + ">";
  const std::string rcpt = "<" + message.to + ">";
  curl_slist* recipients = curl_slist_append(nullptr, rcpt.c_str());

  CURL* h = curl.get();
  curl_easy_setopt(h, CURLOPT_URL, url.c_str());
  curl_easy_setopt(h, CURLOPT_MAIL_FROM, from.c_str());
  curl_easy_setopt(h, CURLOPT_MAIL_RCPT, recipients);
  curl_easy_setopt(h, CURLOPT_READFUNCTION, &read_payload);
  curl_easy_setopt(h, CURLOPT_READDATA, &payload);
  curl_easy_setopt(h, CURLOPT_UPLOAD, 1L);
  curl_easy_setopt(h, CURLOPT_TIMEOUT, config_.timeout_seconds);
  curl_easy_setopt(h, CURLOPT_NOSIGNAL, 1L);
  if (!config_.username.empty()) {
    curl_easy_setopt(h, CURLOPT_USERNAME, config_.username.c_str());
    curl_easy_setopt(h, CURLOPT_PASSWORD, config_.password.c_str());
  }

  const CURLcode rc = curl_easy_perform(h);
  curl_slist_free_all(recipients);
  if (rc != CURLE_OK)
    transport_fail("smtp relay " + url + ": " + curl_easy_strerror(rc));

  DeliveryReceipt receipt;
  receipt.relay_id = url;
  return receipt;
}

std::unique_ptr<Transport> make_transport(const MailConfig& config) {
  if (config.kind == MailConfig::Kind::smtp)
    return std::make_unique<SmtpTransport>(config.smtp);
  return std::make_unique<FileOutbox>(config.outbox_dir);
}

}  // namespace snknock
