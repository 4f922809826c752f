#include "snknock/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "snknock/error.hpp"

namespace snknock {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_fail(const std::string& what) {
  throw Error(ErrorCode::ConfigError, what);
}

const char* env(const char* name) {
  const char* v = std::getenv(name);
  return (v && *v) ? v : nullptr;
}

std::uint64_t parse_u64(const std::string& text, const char* what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    config_fail(std::string(what) + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text, const char* what) {
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  config_fail(std::string(what) + ": expected a boolean, got '" + text + "'");
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_fail(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

std::pair<std::string, int> split_bind_address(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon + 1 == bind.size())
    config_fail("bind address '" + bind + "' is not host:port");
  const std::string port_text = bind.substr(colon + 1);
  int port = 0;
  const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size())
    config_fail("bind address '" + bind + "' has a non-numeric port");
  return {bind.substr(0, colon), port};
}

void apply_env_overrides(ServiceConfig& c) {
  if (auto v = env("SNKNOCK_BIND")) c.gateway.bind_address = v;
  if (auto v = env("SNKNOCK_PUBLIC_BASE_URL")) c.gateway.public_base_url = v;
  if (auto v = env("SNKNOCK_LANGUAGE")) {
    try {
      c.gateway.language_default = parse_language(v);
    } catch (const Error& e) {
      config_fail(e.what());
    }
  }
  if (auto v = env("SNKNOCK_DATA_DIR")) c.data_dir = v;
  if (auto v = env("SNKNOCK_MAX_UPLOAD_BYTES"))
    c.gateway.max_upload_bytes = parse_u64(v, "SNKNOCK_MAX_UPLOAD_BYTES");
  if (auto v = env("SNKNOCK_UPLOADS_PER_HOUR"))
    c.gateway.uploads_per_hour = static_cast<unsigned>(parse_u64(v, "SNKNOCK_UPLOADS_PER_HOUR"));
  if (auto v = env("SNKNOCK_MAIL_TRANSPORT")) {
    const std::string kind = v;
    if (kind == "outbox")
      c.mail.kind = MailConfig::Kind::outbox;
    else if (kind == "smtp")
      c.mail.kind = MailConfig::Kind::smtp;
    else
      config_fail("SNKNOCK_MAIL_TRANSPORT must be 'outbox' or 'smtp'");
  }
  if (auto v = env("SNKNOCK_OUTBOX_DIR")) c.mail.outbox_dir = v;
  if (auto v = env("SNKNOCK_SMTP_HOST")) c.mail.smtp.host = v;
  if (auto v = env("SNKNOCK_SMTP_PORT"))
    c.mail.smtp.port = static_cast<int>(parse_u64(v, "SNKNOCK_SMTP_PORT"));
  if (auto v = env("SNKNOCK_SMTP_USER")) c.mail.smtp.username = v;
  if (auto v = env("SNKNOCK_SMTP_PASSWORD")) c.mail.smtp.password = v;
  if (auto v = env("SNKNOCK_SMTP_SENDER")) c.mail.smtp.sender = v;
  if (auto v = env("SNKNOCK_SMTP_TLS")) c.mail.smtp.use_tls = parse_bool(v, "SNKNOCK_SMTP_TLS");
  if (c.mail.outbox_dir.empty()) c.mail.outbox_dir = c.data_dir / "outbox";
}

void validate(const ServiceConfig& c) {
  const auto& url = c.gateway.public_base_url;
  if (url.empty()) config_fail("public_base_url must not be empty");
  if (url.back() == '/') config_fail("public_base_url must not end with '/'");
  if (c.gateway.max_upload_bytes == 0) config_fail("max_upload_bytes must be positive");
  if (c.data_dir.empty()) config_fail("data_dir must not be empty");
  split_bind_address(c.gateway.bind_address);
  if (c.mail.kind == MailConfig::Kind::smtp && c.mail.smtp.host.empty())
    config_fail("smtp transport needs mail.relay_host");
}

ServiceConfig default_config() {
  ServiceConfig c;
  apply_env_overrides(c);
  validate(c);
  return c;
}

ServiceConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    config_fail("config file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) config_fail("config file " + path.string() + ": expected a JSON object");

  const fs::path base = path.parent_path();
  ServiceConfig c;
  read_opt(j, "bind", c.gateway.bind_address);
  read_opt(j, "public_base_url", c.gateway.public_base_url);
  std::string lang = "en";
  read_opt(j, "language_default", lang);
  try {
    c.gateway.language_default = parse_language(lang);
  } catch (const Error& e) {
    config_fail(e.what());
  }
  read_opt(j, "max_upload_bytes", c.gateway.max_upload_bytes);
  read_opt(j, "admin_listing_enabled", c.gateway.admin_listing_enabled);
  read_opt(j, "owner_token_required", c.gateway.owner_token_required);
  read_opt(j, "uploads_per_hour", c.gateway.uploads_per_hour);
  std::string data_dir = "data";
  read_opt(j, "data_dir", data_dir);
  c.data_dir = resolve(base, data_dir);

  if (j.contains("mail")) {
    const json& m = j.at("mail");
    if (!m.is_object()) config_fail("config key 'mail' must be an object");
    std::string kind = "outbox";
    read_opt(m, "transport", kind);
    if (kind == "smtp")
      c.mail.kind = MailConfig::Kind::smtp;
    else if (kind != "outbox")
      config_fail("mail.transport must be 'outbox' or 'smtp'");
    std::string outbox;
    read_opt(m, "outbox_dir", outbox);
    if (!outbox.empty()) c.mail.outbox_dir = resolve(base, outbox);
    read_opt(m, "relay_host", c.mail.smtp.host);
    read_opt(m, "relay_port", c.mail.smtp.port);
    read_opt(m, "username", c.mail.smtp.username);
    read_opt(m, "password", c.mail.smtp.password);
    read_opt(m, "sender", c.mail.smtp.sender);
    read_opt(m, "use_tls", c.mail.smtp.use_tls);
  }

  apply_env_overrides(c);
  validate(c);
  return c;
}

}  // namespace snknock
