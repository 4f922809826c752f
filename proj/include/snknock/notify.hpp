#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "snknock/challenge.hpp"

namespace snknock {

struct EmailMessage {
  std::string to;
  std::string subject;
  std::string body_text;
  Timestamp created_at{};  // whole seconds, so it survives the Date header

  bool operator==(const EmailMessage&) const = default;
};

struct OutboxEntry {
  std::uint64_t sequence = 0;
  EmailMessage message;
  bool delivered = false;
};

struct DeliveryReceipt {
  std::optional<std::uint64_t> sequence;  // file outbox
  std::string relay_id;                   // SMTP relay
};

/// "{base_url}/audio/{audio_name}"
std::string audio_url(std::string_view base_url, std::string_view audio_name);

/// Throws MismatchedAnswer when the answer belongs to another challenge.
EmailMessage compose_notification(const ChallengeRecord& challenge,
                                  const AnswerRecord& answer,
                                  std::string_view base_url);

/// RFC-822-style rendering used by the outbox: To, Subject, Date headers,
/// blank line, body verbatim. CRLF separates headers.
std::string render_eml(const EmailMessage& message, std::string_view from = {});
EmailMessage parse_eml(std::string_view text);

class Transport {
 public:
  virtual ~Transport() = default;
  /// Throws TransportFailure; never drops a message silently.
  virtual DeliveryReceipt send(const EmailMessage& message) = 0;
};

/// Writes each message to "{sequence:08}.eml" in a directory. Sequences are
/// strictly increasing and continue after existing files.
class FileOutbox final : public Transport {
 public:
  explicit FileOutbox(std::filesystem::path dir);

  DeliveryReceipt send(const EmailMessage& message) override;

  const std::filesystem::path& dir() const { return dir_; }
  std::vector<OutboxEntry> list() const;
  OutboxEntry read(std::uint64_t sequence) const;
  static std::string file_name(std::uint64_t sequence);

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
  std::uint64_t next_ = 1;
};

struct SmtpConfig {
  std::string host;
  int port = 25;
  std::string username;
  std::string password;
  std::string sender = "snknock@localhost";
  bool use_tls = false;
  long timeout_seconds = 10;
};

class SmtpTransport final : public Transport {
 public:
  explicit SmtpTransport(SmtpConfig config);
  DeliveryReceipt send(const EmailMessage& message) override;

 private:
  SmtpConfig config_;
};

struct MailConfig {
  enum class Kind { outbox, smtp } kind = Kind::outbox;
  std::filesystem::path outbox_dir;
  SmtpConfig smtp;
};

std::unique_ptr<Transport> make_transport(const MailConfig& config);

}  // namespace snknock
