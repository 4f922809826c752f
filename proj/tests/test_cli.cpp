#include <doctest.h>

#include <fstream>
#include <regex>

#include <httplib.h>

#include "cli_runner.hpp"
#include "snknock/notify.hpp"
#include "snknock/store.hpp"

using namespace snknock;
using snknock::testing::CliProcess;
using snknock::testing::run_cli;
using snknock::testing::TempDir;
namespace fs = std::filesystem;

namespace {

constexpr const char* kScenario = R"([scenario tiny]
victim_degree = 6
n_networks = 2
probe_budget = 4
known_names = Bob Smith, Carol Jones
victim.base_p = 0.05
victim.w_mutual = 0.5
victim.mutual_saturation = 3
victim.w_name = 0.2
victim.profile_penalty = 0.3
victim.p_voice_pass = 0.0
friend.base_p = 0.4
)";

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

/// Config file pointing data and outbox into `dir`.
fs::path write_config(const TempDir& dir, const std::string& mail = R"({"transport": "outbox"})",
                      const std::string& bind = "127.0.0.1:8080") {
  return write_file(dir / "snknock.json",
                    R"({"bind": ")" + bind + R"(", "public_base_url": "http://snknock.sf.net",)" +
                        R"( "data_dir": "data", "mail": )" + mail + "}");
}

std::string value_of(const std::string& out, const std::string& key) {
  std::smatch m;
  const std::regex re("(^|\n)" + key + "=([^\n]*)");
  return std::regex_search(out, m, re) ? m[2].str() : "";
}

int closed_port() { return snknock::testing::free_port(); }

}  // namespace

TEST_CASE("simulate is deterministic for a fixed seed") {
  TempDir dir;
  const auto scenario = write_file(dir / "tiny.ini", kScenario).string();
  const auto a = run_cli({"simulate", "--scenario", scenario, "--seed", "7", "--trials", "2000"});
  const auto b = run_cli(
      {"simulate", "--scenario", scenario, "--seed", "7", "--trials", "2000", "--threads", "3"});
  REQUIRE(a.exit_code == 0);
  CHECK(b.exit_code == 0);
  CHECK(a.out == b.out);
  const auto c = run_cli({"simulate", "--scenario", scenario, "--seed", "8", "--trials", "2000"});
  CHECK(c.out != a.out);

  std::istringstream lines(a.out);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].starts_with("scenario=tiny policy=none trials=2000 successes="));
  CHECK(rows[1].starts_with("scenario=tiny policy=profile_check "));
  CHECK(rows[2].starts_with("scenario=tiny policy=voice_challenge trials=2000 successes=0 "
                            "success_rate=0.0000 "));
  CHECK(rows[2].ends_with(" seed=7"));
}

TEST_CASE("simulate writes csv") {
  TempDir dir;
  const auto scenario = write_file(dir / "tiny.ini", kScenario).string();
  const auto csv = (dir / "out.csv").string();
  const auto r = run_cli({"simulate", "--scenario", scenario, "--trials", "100", "--csv", csv});
  REQUIRE(r.exit_code == 0);
  const auto text = snknock::testing::slurp(csv);
  CHECK(text.starts_with(
      "scenario,policy,trials,successes,success_rate,weak_found_mean,mutual_at_strike_mean,seed\n"
      "tiny,none,100,"));
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("simulate rejects malformed scenarios with the line number") {
  TempDir dir;
  const auto bad = write_file(dir / "bad.ini", "[scenario x]\nknown_names = A, B\nlist1_size = 1x\n");
  const auto r = run_cli({"simulate", "--scenario", bad.string()});
  CHECK(r.exit_code == 1);
  CHECK(r.err.find(bad.string() + ":3:") != std::string::npos);
  CHECK(r.out.empty());

  CHECK(run_cli({"simulate", "--scenario", (dir / "nope.ini").string()}).exit_code == 1);
  CHECK(run_cli({"simulate"}).exit_code == 1);
}

TEST_CASE("challenge-create issues increasing codes") {
  TempDir dir;
  const auto cfg = write_config(dir).string();
  const auto first = run_cli({"--config", cfg, "challenge-create", "--email", "Alice@test.com",
                              "--question", "Talk to me about myself?", "--question",
                              "What is my job?"});
  REQUIRE(first.exit_code == 0);
  CHECK(value_of(first.out, "challenge_id") == "1");
  CHECK(value_of(first.out, "link") == "http://snknock.sf.net/en/answer?code=1");
  CHECK(value_of(first.out, "owner_token").size() == 32);

  const auto second = run_cli({"challenge-create", "--config", cfg, "--email", "b@c.d",
                               "--question", "Q?", "--lang", "ar"});
  REQUIRE(second.exit_code == 0);
  CHECK(value_of(second.out, "link") == "http://snknock.sf.net/ar/answer?code=2");

  Store store({dir / "data"});
  CHECK(store.get_challenge(1).question_lines ==
        std::vector<std::string>{"Talk to me about myself?", "What is my job?"});

  CHECK(run_cli({"challenge-create", "--config", cfg, "--email", "a@b.c"}).exit_code == 1);
  CHECK(run_cli({"challenge-create", "--config", cfg, "--email", "nope", "--question", "Q?"})
            .exit_code == 1);
  CHECK(run_cli({"challenge-create", "--config", cfg, "--email", "a@b.c", "--question", "Q?",
                 "--lang", "fr"})
            .exit_code == 1);
  // Failed attempts consume no ids.
  const auto third =
      run_cli({"challenge-create", "--config", cfg, "--email", "a@b.c", "--question", "Q?"});
  CHECK(value_of(third.out, "challenge_id") == "3");
}

TEST_CASE("config can come from the environment") {
  TempDir dir;
  const auto cfg = write_config(dir).string();
  const auto r = run_cli({"challenge-create", "--email", "a@b.c", "--question", "Q?"},
                         {{"SNKNOCK_CONFIG", cfg}});
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "data" / "records.sqlite3"));
  CHECK(run_cli({"answers-list", "--challenge", "1"},
                {{"SNKNOCK_CONFIG", (dir / "missing.json").string()}})
            .exit_code == 1);
}

TEST_CASE("answers, outbox and notify-retry") {
  TempDir dir;
  const auto cfg = write_config(dir).string();
  REQUIRE(run_cli({"challenge-create", "--config", cfg, "--email", "Alice@test.com", "--question",
                   "Where did we meet?"})
              .exit_code == 0);
  AnswerRecord stored;
  {
    Store store({dir / "data"});
    std::mt19937_64 rng(99);
    AnswerRecord a;
    a.challenge_id = 1;
    a.audio_name = new_answer_name(rng);
    a.submitted_at = now();
    stored = store.put_answer(a, {"voice bytes", "audio/webm"});
  }

  const auto listed = run_cli({"answers-list", "--config", cfg, "--challenge", "1"});
  REQUIRE(listed.exit_code == 0);
  CHECK(listed.out.starts_with("1\thttp://snknock.sf.net/audio/" + stored.audio_name +
                               "\taudio/webm\t11\t"));
  CHECK(listed.out.find("\tpending\tunnotified\n") != std::string::npos);
  CHECK(run_cli({"answers-list", "--config", cfg, "--challenge", "9"}).exit_code == 1);

  CHECK(run_cli({"notify-retry", "--config", cfg, "--answer", "42"}).exit_code == 1);

  const auto sent = run_cli({"notify-retry", "--config", cfg, "--answer", "1"});
  REQUIRE(sent.exit_code == 0);
  CHECK(sent.out == "sequence=1\n");
  FileOutbox outbox(dir / "data" / "outbox");
  REQUIRE(outbox.list().size() == 1);
  const auto expected = compose_notification(Store({dir / "data"}).get_challenge(1), stored,
                                             "http://snknock.sf.net");
  CHECK(outbox.read(1).message.body_text == expected.body_text);
  CHECK(outbox.read(1).message.to == "Alice@test.com");

  const auto again = run_cli({"notify-retry", "--config", cfg, "--answer", "1"});
  CHECK(again.out == "sequence=2\n");
  CHECK(outbox.read(2).message.body_text == expected.body_text);

  const auto shown = run_cli({"outbox-show", "--config", cfg, "--sequence", "2"});
  CHECK(shown.exit_code == 0);
  CHECK(shown.out.find(expected.body_text) != std::string::npos);
  CHECK(run_cli({"outbox-show", "--config", cfg, "--sequence", "9"}).exit_code == 1);
  const auto mail = run_cli({"outbox-list", "--config", cfg});
  CHECK(mail.out.starts_with("00000001.eml\tAlice@test.com\t"));
  CHECK(std::count(mail.out.begin(), mail.out.end(), '\n') == 2);
  CHECK(run_cli({"answers-list", "--config", cfg, "--challenge", "1"}).out.find("\tnotified\n") !=
        std::string::npos);
}

TEST_CASE("notify-retry reports a relay outage") {
  TempDir dir;
  const auto cfg = write_config(
                       dir, R"({"transport": "smtp", "relay_host": "127.0.0.1", "relay_port": )" +
                                std::to_string(closed_port()) + "}")
                       .string();
  REQUIRE(run_cli({"challenge-create", "--config", cfg, "--email", "a@b.c", "--question", "Q?"})
              .exit_code == 0);
  {
    Store store({dir / "data"});
    std::mt19937_64 rng(5);
    AnswerRecord a;
    a.challenge_id = 1;
    a.audio_name = new_answer_name(rng);
    a.submitted_at = now();
    store.put_answer(a, {"x", "audio/ogg"});
  }
  const auto r = run_cli({"notify-retry", "--config", cfg, "--answer", "1"});
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("TransportFailure") != std::string::npos);
  CHECK_FALSE(Store({dir / "data"}).get_answer(1).notified);
}

TEST_CASE("serve startup failures") {
  TempDir dir;
  CHECK(run_cli({"serve", "--config", (dir / "missing.json").string()}).exit_code == 1);
  CHECK(run_cli({"serve", "--config", write_file(dir / "bad.json", "{").string()}).exit_code == 1);

  const auto cfg = write_config(dir).string();
  CHECK(run_cli({"serve", "--config", cfg, "--bind", "127.0.0.1:http"}).exit_code == 2);

  // Hold a port so the server cannot bind it.
  httplib::Server blocker;
  const int held = blocker.bind_to_any_port("127.0.0.1");
  REQUIRE(held > 0);
  const auto busy = run_cli({"serve", "--config", cfg, "--bind", "127.0.0.1:" + std::to_string(held)});
  CHECK(busy.exit_code == 2);
  CHECK(busy.err.find("cannot bind") != std::string::npos);
}

TEST_CASE("serve answers requests and stops on SIGTERM") {
  TempDir dir;
  const int port = snknock::testing::free_port();
  const auto cfg = write_config(dir, R"({"transport": "outbox"})",
                                "127.0.0.1:" + std::to_string(port))
                       .string();
  CliProcess server({"serve", "--config", cfg});
  REQUIRE(server.wait_for_output("snknock listening on 127.0.0.1:" + std::to_string(port),
                                 std::chrono::seconds(10)));
  httplib::Client client("127.0.0.1", port);
  const auto r = client.Post("/challenges",
                             httplib::Params{{"user_email", "a@b.c"}, {"user_questions", "Q?"}});
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body.find("http://snknock.sf.net/en/answer?code=1") != std::string::npos);
  server.signal(SIGTERM);
  CHECK(server.finish().exit_code == 0);
}
