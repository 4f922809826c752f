#include <doctest.h>

#include <regex>

#include "gateway_harness.hpp"
#include "snknock/digest.hpp"

using namespace snknock;
using snknock::testing::body_json;
using snknock::testing::GatewayHarness;
namespace fs = std::filesystem;

namespace {

std::size_t blob_count(Store& store) {
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(store.layout().blobs_dir)) ++n;
  return n;
}

/// First "{base}/audio/..." URL in a notification body.
std::string audio_url_in(const std::string& body, const std::string& base) {
  const auto start = body.find(base + "/audio/");
  REQUIRE(start != std::string::npos);
  auto end = body.find_first_of(" \r\n\t", start);
  return body.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

httplib::Headers owner(const std::string& token) { return {{"X-Owner-Token", token}}; }

}  // namespace

TEST_CASE("challenge creation returns the answer link") {
  GatewayHarness gw;
  for (int i = 0; i < 42; ++i)
    gw.store().put_challenge(new_challenge("x@y.z", {"Filler?"}, Language::en));

  const auto r = gw.create("Alice@test.com", "Talk to me about myself?\nWhat is my job?");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto j = body_json(r);
  CHECK(j["challenge_id"] == 43);
  CHECK(j["link"] == gw.base_url() + "/en/answer?code=43");
  CHECK(j["language"] == "en");
  CHECK(j["owner_token"].get<std::string>().size() == 32);
  CHECK_FALSE(j["profile_message"].get<std::string>().empty());

  const auto stored = gw.store().get_challenge(43);
  CHECK(stored.owner_email == "Alice@test.com");
  CHECK(stored.question_lines ==
        std::vector<std::string>{"Talk to me about myself?", "What is my job?"});
}

TEST_CASE("challenge creation validates its fields") {
  GatewayHarness gw;
  SUBCASE("missing email") {
    const auto r = gw.http().Post("/challenges", httplib::Params{{"user_questions", "Q?"}});
    REQUIRE(r);
    CHECK(r->status == 400);
  }
  SUBCASE("invalid email") { CHECK(gw.create("not-an-email", "Q?")->status == 400); }
  SUBCASE("no questions") { CHECK(gw.create("a@b.c", "\n  \n")->status == 400); }
  SUBCASE("too many questions") {
    std::string q;
    for (int i = 0; i < 21; ++i) q += "Question " + std::to_string(i) + "?\n";
    CHECK(gw.create("a@b.c", q)->status == 400);
  }
  SUBCASE("unknown language") { CHECK(gw.create("a@b.c", "Q?", "fr")->status == 400); }
  SUBCASE("blank lines are dropped, CRLF accepted") {
    const auto r = gw.create("a@b.c", "First?\r\n\r\nSecond?\r\n", "ar");
    REQUIRE(r->status == 200);
    const auto j = body_json(r);
    CHECK(j["link"] == gw.base_url() + "/ar/answer?code=1");
    CHECK(gw.store().get_challenge(1).question_lines ==
          std::vector<std::string>{"First?", "Second?"});
  }
  SUBCASE("json body") {
    const auto r = gw.http().Post(
        "/challenges", R"({"user_email":"a@b.c","user_questions":"Q?","language":"en"})",
        "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
  }
  CHECK(gw.store().list_challenges().size() <= 1);
}

TEST_CASE("html form flow") {
  GatewayHarness gw;
  const auto home = gw.http().Get("/");
  REQUIRE(home);
  CHECK(home->status == 200);
  CHECK(home->body.find("Talk to me about myself?") != std::string::npos);
  CHECK(home->body.find("name=\"user_email\"") != std::string::npos);

  httplib::Headers html{{"Accept", "text/html"}};
  const auto created = gw.http().Post(
      "/challenges", html, httplib::Params{{"user_email", "a@b.c"}, {"user_questions", "Q?"}});
  REQUIRE(created);
  CHECK(created->status == 200);
  CHECK(created->body.find(gw.base_url() + "/en/answer?code=1") != std::string::npos);

  const auto page = gw.http().Get("/en/answer?code=1", html);
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body.find("<p>Q?</p>") != std::string::npos);
  CHECK(page->body.find("a@b.c") == std::string::npos);
}

TEST_CASE("suggestions endpoint") {
  GatewayHarness gw;
  const auto en = gw.http().Get("/en/suggestions");
  REQUIRE(en);
  CHECK(en->status == 200);
  const auto j = body_json(en);
  CHECK(j["language"] == "en");
  CHECK(j["suggestions"].get<std::vector<std::string>>() == suggested_questions(Language::en));
  CHECK(body_json(gw.http().Get("/ar/suggestions"))["suggestions"].size() ==
        suggested_questions(Language::ar).size());
  CHECK(gw.http().Get("/xx/suggestions")->status == 404);
}

TEST_CASE("answer page lookups") {
  GatewayHarness gw;
  REQUIRE(gw.create("secret-owner@test.com", "Where did we meet?\nWhat is my job?")->status == 200);

  const auto r = gw.http().Get("/en/answer?code=1");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto j = body_json(r);
  CHECK(j["code"] == 1);
  CHECK(j["questions"].get<std::vector<std::string>>() ==
        std::vector<std::string>{"Where did we meet?", "What is my job?"});
  CHECK(j["upload_endpoint"] == gw.base_url() + "/answers");
  CHECK(r->body.find("secret-owner") == std::string::npos);

  CHECK(gw.http().Get("/en/answer?code=abc")->status == 400);
  CHECK(gw.http().Get("/en/answer")->status == 400);
  CHECK(gw.http().Get("/en/answer?code=999")->status == 404);
  CHECK(gw.http().Get("/fr/answer?code=1")->status == 404);
}

TEST_CASE("upload notifies the owner with a working audio link") {
  GatewayHarness gw;
  REQUIRE(gw.create("Alice@test.com", "Talk to me about myself?")->status == 200);
  std::mt19937_64 rng(11);
  const auto bytes = snknock::testing::random_bytes(rng, 100 * 1024);

  const auto up = gw.upload("1", bytes, "audio/webm");
  REQUIRE(up);
  REQUIRE(up->status == 200);
  const auto j = body_json(up);
  CHECK(j["answer_id"] == 1);
  CHECK(j["notified"] == true);
  const auto name = j["audio_name"].get<std::string>();
  CHECK(is_valid_answer_name(name));

  const auto mail = gw.outbox().list();
  REQUIRE(mail.size() == 1);
  CHECK(mail[0].message.to == "Alice@test.com");
  const auto url = audio_url_in(mail[0].message.body_text, gw.base_url());
  CHECK(url == gw.base_url() + "/audio/" + name);

  const auto fetched = gw.http().Get(gw.path_of(url));
  REQUIRE(fetched);
  CHECK(fetched->status == 200);
  CHECK(fetched->get_header_value("Content-Type") == "audio/webm");
  CHECK(sha256_hex(fetched->body) == sha256_hex(bytes));
  CHECK(gw.store().get_answer(1).notified);
}

TEST_CASE("upload rejections") {
  GatewayHarness gw;
  REQUIRE(gw.create("a@b.c", "Q?")->status == 200);

  SUBCASE("oversized audio leaves nothing behind") {
    const auto r = gw.upload("1", std::string(11 * 1024 * 1024, 'a'));
    REQUIRE(r);
    CHECK(r->status == 413);
  }
  SUBCASE("non-audio media type") { CHECK(gw.upload("1", "hello", "text/plain")->status == 415); }
  SUBCASE("empty audio") { CHECK(gw.upload("1", "", "audio/webm")->status == 400); }
  SUBCASE("unknown code") { CHECK(gw.upload("77", "abc")->status == 404); }
  SUBCASE("malformed code") { CHECK(gw.upload("x1", "abc")->status == 400); }
  SUBCASE("missing audio part") {
    httplib::MultipartFormDataItems items{{"code", "1", "", ""}};
    CHECK(gw.http().Post("/answers", items)->status == 400);
  }
  CHECK(gw.store().list_answers(1).empty());
  CHECK(blob_count(gw.store()) == 0);
  CHECK(gw.outbox().list().empty());
}

TEST_CASE("relay outage keeps the answer but reports it unnotified") {
  GatewayHarness gw({}, /*relay_down=*/true);
  REQUIRE(gw.create("a@b.c", "Q?")->status == 200);
  const auto r = gw.upload("1", "voice");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(body_json(r)["notified"] == false);
  CHECK(gw.down().attempts == 1);
  const auto stored = gw.store().get_answer(1);
  CHECK_FALSE(stored.notified);
  CHECK(gw.store().get_blob(stored.audio_name).bytes == "voice");
}

TEST_CASE("audio fetch rejects malformed names") {
  GatewayHarness gw;
  CHECK(gw.http().Get("/audio/..%2F..%2Fetc%2Fpasswd")->status == 400);
  CHECK(gw.http().Get("/audio/answerfile_xyz")->status == 400);
  CHECK(gw.http().Get("/audio/answerfile_0123456789abcdef0123456789abcdef")->status == 404);
}

TEST_CASE("owner endpoints require the owner token") {
  GatewayHarness gw;
  const auto token = body_json(gw.create("a@b.c", "Q?"))["owner_token"].get<std::string>();
  const auto other = body_json(gw.create("c@d.e", "Q?"))["owner_token"].get<std::string>();
  REQUIRE(gw.upload("1", "first")->status == 200);

  CHECK(gw.http().Get("/challenges/1/answers")->status == 401);
  CHECK(gw.http().Get("/challenges/1/answers", owner(other))->status == 401);
  CHECK(gw.http().Get("/challenges/99/answers", owner(token))->status == 404);

  const auto listed = gw.http().Get("/challenges/1/answers", {{"Authorization", "Bearer " + token}});
  REQUIRE(listed);
  CHECK(listed->status == 200);
  const auto answers = body_json(listed)["answers"];
  REQUIRE(answers.size() == 1);
  CHECK(answers[0]["decision"] == "pending");
  CHECK(answers[0]["decided_at"].is_null());
  CHECK(answers[0]["audio_url"] ==
        gw.base_url() + "/audio/" + answers[0]["audio_name"].get<std::string>());

  const auto verdict = [&](const std::string& t, const std::string& v, const std::string& id = "1") {
    return gw.http().Post("/answers/" + id + "/decision", owner(t), R"({"verdict":")" + v + "\"}",
                          "application/json");
  };
  CHECK(verdict(other, "accepted")->status == 401);
  CHECK(verdict(token, "accepted", "55")->status == 404);
  CHECK(verdict(token, "maybe")->status == 400);
  CHECK(verdict(token, "pending")->status == 400);
  const auto decided = verdict(token, "accepted");
  REQUIRE(decided);
  CHECK(decided->status == 200);
  CHECK(body_json(decided)["decision"] == "accepted");
  CHECK(body_json(decided)["decided_at"].is_string());
  CHECK(verdict(token, "rejected")->status == 409);
  CHECK(verdict(token, "accepted")->status == 409);
  CHECK(gw.store().get_answer(1).decision == Decision::accepted);
}

TEST_CASE("admin listing is off by default") {
  SUBCASE("disabled") {
    GatewayHarness gw;
    CHECK(gw.http().Get("/admin/challenges")->status == 404);
  }
  SUBCASE("enabled") {
    GatewayConfig cfg;
    cfg.admin_listing_enabled = true;
    GatewayHarness gw(cfg);
    gw.create("a@b.c", "Q?");
    const auto r = gw.http().Get("/admin/challenges");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(body_json(r)["challenges"].size() == 1);
  }
}

TEST_CASE("uploads are rate limited per source") {
  GatewayConfig cfg;
  cfg.uploads_per_hour = 3;
  GatewayHarness gw(cfg);
  REQUIRE(gw.create("a@b.c", "Q?")->status == 200);
  for (int i = 0; i < 3; ++i) CHECK(gw.upload("1", "v")->status == 200);
  CHECK(gw.upload("1", "v")->status == 429);
  CHECK(gw.store().list_answers(1).size() == 3);
}

TEST_CASE("rate limiter refills over time") {
  RateLimiter limiter(2);
  const auto t0 = RateLimiter::SteadyClock::now();
  CHECK(limiter.allow("a", t0));
  CHECK(limiter.allow("a", t0));
  CHECK_FALSE(limiter.allow("a", t0));
  CHECK(limiter.allow("b", t0));
  CHECK(limiter.allow("a", t0 + std::chrono::minutes(31)));
  CHECK_FALSE(limiter.allow("a", t0 + std::chrono::minutes(31)));
}
