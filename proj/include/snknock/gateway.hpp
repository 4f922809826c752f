#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>

#include "snknock/config.hpp"
#include "snknock/notify.hpp"
#include "snknock/store.hpp"

namespace httplib {
class Server;
}

namespace snknock {

/// Per-source token bucket: `capacity` tokens, refilled continuously over
/// one hour.
class RateLimiter {
 public:
  using SteadyClock = std::chrono::steady_clock;

  explicit RateLimiter(unsigned per_hour) : capacity_(per_hour) {}
  bool allow(const std::string& source, SteadyClock::time_point at = SteadyClock::now());

 private:
  struct Bucket {
    double tokens;
    SteadyClock::time_point last;
  };
  unsigned capacity_;
  std::mutex mutex_;
  std::map<std::string, Bucket> buckets_;
};

/// HTTP surface for the challenge flow. JSON responses are the contract;
/// requests that prefer text/html get minimal server-rendered pages.
class Gateway {
 public:
  Gateway(GatewayConfig config, Store& store, Transport& transport);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds to config.bind_address (port 0 picks a free port). Returns the
  /// bound port or -1 on failure.
  int bind();
  /// Serves until stop(). Requires a successful bind().
  bool listen();
  void stop();
  /// Blocks until listen() is accepting or has given up.
  void wait_until_ready() const;
  int port() const { return port_; }
  const GatewayConfig& config() const { return config_; }

 private:
  void install_routes();
  std::string next_answer_name();

  GatewayConfig config_;
  Store& store_;
  Transport& transport_;
  std::unique_ptr<httplib::Server> server_;
  RateLimiter limiter_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  int port_ = -1;
};

}  // namespace snknock
