#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "snknock/challenge.hpp"
#include "snknock/notify.hpp"
#include "snknock/store.hpp"

namespace snknock {

struct GatewayConfig {
  std::string bind_address = "127.0.0.1:8080";
  std::string public_base_url = "http://127.0.0.1:8080";
  Language language_default = Language::en;
  std::uint64_t max_upload_bytes = kDefaultBlobCap;
  bool admin_listing_enabled = false;
  bool owner_token_required = true;
  unsigned uploads_per_hour = 30;
};

struct ServiceConfig {
  GatewayConfig gateway;
  std::filesystem::path data_dir = "data";
  MailConfig mail;
};

/// Splits "host:port". Throws ConfigError when the port is not a number.
std::pair<std::string, int> split_bind_address(const std::string& bind);

/// Reads a JSON config file, then applies SNKNOCK_* environment overrides.
/// Relative paths resolve against the config file's directory. Throws
/// ConfigError on unreadable or invalid input.
ServiceConfig load_config(const std::filesystem::path& path);

/// Defaults plus environment overrides, for runs without a config file.
ServiceConfig default_config();

void apply_env_overrides(ServiceConfig& config);
void validate(const ServiceConfig& config);

}  // namespace snknock
