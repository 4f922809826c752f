// snknock: run the verification service, simulate the cloning attack, and
// administer challenges offline.
//
// Exit codes: 0 ok, 1 invalid input / config / unknown id, 2 bind failure,
// 3 mail transport failure, 4 storage failure.

#include <signal.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "snknock/challenge.hpp"
#include "snknock/clonesim.hpp"
#include "snknock/config.hpp"
#include "snknock/digest.hpp"
#include "snknock/error.hpp"
#include "snknock/gateway.hpp"
#include "snknock/notify.hpp"
#include "snknock/store.hpp"

namespace {

using namespace snknock;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitBind = 2;
constexpr int kExitTransport = 3;
constexpr int kExitStorage = 4;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::TransportFailure: return kExitTransport;
    case ErrorCode::StorageFailure: return kExitStorage;
    default: return kExitInvalid;
  }
}

ServiceConfig resolve_config(const std::string& config_path) {
  std::string path = config_path;
  if (path.empty())
    if (const char* env = std::getenv("SNKNOCK_CONFIG"); env && *env) path = env;
  return path.empty() ? default_config() : load_config(path);
}

Store open_store(const ServiceConfig& cfg) {
  return Store(StoreOptions{cfg.data_dir, cfg.gateway.max_upload_bytes});
}

int cmd_serve(const ServiceConfig& base_cfg, const std::string& bind_override) {
  ServiceConfig cfg = base_cfg;
  if (!bind_override.empty()) cfg.gateway.bind_address = bind_override;
  try {
    split_bind_address(cfg.gateway.bind_address);
  } catch (const Error& e) {
    std::cerr << "snknock: " << e.what() << "\n";
    return kExitBind;
  }

  // Block termination signals before any thread starts so a dedicated
  // thread can receive them with sigwait.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Store store(StoreOptions{cfg.data_dir, cfg.gateway.max_upload_bytes});
  const auto& rec = store.last_recovery();
  if (rec.temp_files_removed || rec.orphan_blobs_removed)
    std::cerr << "snknock: recovery removed " << rec.temp_files_removed << " temp files and "
              << rec.orphan_blobs_removed << " orphan blobs\n";
  auto transport = make_transport(cfg.mail);
  Gateway gateway(cfg.gateway, store, *transport);

  const int port = gateway.bind();
  if (port < 0) {
    std::cerr << "snknock: cannot bind " << cfg.gateway.bind_address << "\n";
    return kExitBind;
  }
  const auto host = split_bind_address(cfg.gateway.bind_address).first;
  std::cout << "snknock listening on " << host << ":" << port << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    gateway.wait_until_ready();
    gateway.stop();
  });
  gateway.listen();
  // listen() also returns when the server fails; wake the waiter either way.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cerr << "snknock: stopped\n";
  return kExitOk;
}

int cmd_simulate(const std::string& scenario_path, std::uint64_t seed, std::uint64_t trials,
                 const std::string& csv_path, unsigned threads) {
  std::vector<sim::Scenario> scenarios;
  try {
    scenarios = sim::load_scenarios(scenario_path);
  } catch (const Error& e) {
    std::cerr << "snknock: " << e.what() << "\n";
    return kExitInvalid;
  }
  std::optional<std::ofstream> csv;
  if (!csv_path.empty()) {
    csv.emplace(csv_path);
    if (!*csv) {
      std::cerr << "snknock: cannot write " << csv_path << "\n";
      return kExitInvalid;
    }
    *csv << sim::csv_header() << "\n";
  }
  for (const auto& s : scenarios) {
    for (auto kind : s.policies) {
      const auto r = sim::run_trials(s, kind, seed, trials, threads);
      std::cout << sim::format_result_line(r) << "\n";
      if (csv) *csv << sim::format_csv_row(r) << "\n";
    }
  }
  return kExitOk;
}

int cmd_challenge_create(const ServiceConfig& cfg, const std::string& email,
                         const std::vector<std::string>& questions, const std::string& lang_text) {
  const Language lang = lang_text.empty() ? cfg.gateway.language_default : parse_language(lang_text);
  auto rec = new_challenge(email, questions, lang);
  Store store = open_store(cfg);
  const std::string token = random_token_hex(16);
  rec = store.put_challenge(std::move(rec), token);
  std::cout << "challenge_id=" << *rec.id << "\n"
            << "link=" << build_answer_url(cfg.gateway.public_base_url, lang, *rec.id) << "\n"
            << "owner_token=" << token << "\n";
  return kExitOk;
}

int cmd_answers_list(const ServiceConfig& cfg, std::int64_t challenge_id) {
  Store store = open_store(cfg);
  for (const auto& a : store.list_answers(challenge_id)) {
    std::cout << *a.id << "\t" << audio_url(cfg.gateway.public_base_url, a.audio_name) << "\t"
              << a.media_type << "\t" << a.size_bytes << "\t" << format_iso8601(a.submitted_at)
              << "\t" << to_string(a.decision) << "\t" << (a.notified ? "notified" : "unnotified")
              << "\n";
  }
  return kExitOk;
}

FileOutbox open_outbox(const ServiceConfig& cfg) { return FileOutbox(cfg.mail.outbox_dir); }

int cmd_outbox_list(const ServiceConfig& cfg) {
  for (const auto& e : open_outbox(cfg).list())
    std::cout << FileOutbox::file_name(e.sequence) << "\t" << e.message.to << "\t"
              << format_iso8601(e.message.created_at) << "\t" << e.message.subject << "\n";
  return kExitOk;
}

int cmd_outbox_show(const ServiceConfig& cfg, std::uint64_t sequence) {
  std::cout << render_eml(open_outbox(cfg).read(sequence).message);
  return kExitOk;
}

int cmd_notify_retry(const ServiceConfig& cfg, std::int64_t answer_id) {
  Store store = open_store(cfg);
  const auto answer = store.get_answer(answer_id);
  const auto challenge = store.get_challenge(answer.challenge_id);
  auto transport = make_transport(cfg.mail);
  const auto receipt =
      transport->send(compose_notification(challenge, answer, cfg.gateway.public_base_url));
  store.set_notified(answer_id, true);
  if (receipt.sequence)
    std::cout << "sequence=" << *receipt.sequence << "\n";
  else
    std::cout << "relay=" << receipt.relay_id << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"snknock: voice-challenge friend verification and cloning-attack simulator"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (default: $SNKNOCK_CONFIG)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  std::string bind_override;
  serve->add_option("--config", config_path, "JSON config file");
  serve->add_option("--bind", bind_override, "host:port override");

  auto* simulate = app.add_subcommand("simulate", "Run Monte Carlo attack simulations");
  std::string scenario_path, csv_path;
  std::uint64_t seed = 1, trials = 10000;
  unsigned threads = 1;
  simulate->add_option("--scenario", scenario_path, "Scenario file")->required();
  simulate->add_option("--seed", seed, "Base seed");
  simulate->add_option("--trials", trials, "Trials per scenario and policy")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--csv", csv_path, "Also write CSV rows here");
  simulate->add_option("--threads", threads, "Worker threads (output does not depend on it)")
      ->check(CLI::PositiveNumber);

  auto* create = app.add_subcommand("challenge-create", "Create a challenge offline");
  std::string email, lang;
  std::vector<std::string> questions;
  create->add_option("--config", config_path, "JSON config file");
  create->add_option("--email", email, "Owner email address")->required();
  create->add_option("--question", questions, "Question line (repeatable)");
  create->add_option("--lang", lang, "en or ar");

  auto* answers = app.add_subcommand("answers-list", "List answers for a challenge");
  std::int64_t challenge_id = 0;
  answers->add_option("--config", config_path, "JSON config file");
  answers->add_option("--challenge", challenge_id, "Challenge id")->required();

  auto* outbox_list = app.add_subcommand("outbox-list", "List file-outbox messages");
  outbox_list->add_option("--config", config_path, "JSON config file");

  auto* outbox_show = app.add_subcommand("outbox-show", "Print one outbox message");
  std::uint64_t sequence = 0;
  outbox_show->add_option("--config", config_path, "JSON config file");
  outbox_show->add_option("--sequence", sequence, "Outbox sequence number")->required();

  auto* retry = app.add_subcommand("notify-retry", "Resend the notification for an answer");
  std::int64_t answer_id = 0;
  retry->add_option("--config", config_path, "JSON config file");
  retry->add_option("--answer", answer_id, "Answer id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*simulate) return cmd_simulate(scenario_path, seed, trials, csv_path, threads);

    ServiceConfig cfg;
    try {
      cfg = resolve_config(config_path);
    } catch (const Error& e) {
      std::cerr << "snknock: " << e.what() << "\n";
      return kExitInvalid;
    }
    if (*serve) return cmd_serve(cfg, bind_override);
    if (*create) return cmd_challenge_create(cfg, email, questions, lang);
    if (*answers) return cmd_answers_list(cfg, challenge_id);
    if (*outbox_list) return cmd_outbox_list(cfg);
    if (*outbox_show) return cmd_outbox_show(cfg, sequence);
    if (*retry) return cmd_notify_retry(cfg, answer_id);
  } catch (const Error& e) {
    std::cerr << "snknock: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "snknock: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
