#include <doctest.h>

#include <fstream>

#include "snknock/clonesim.hpp"
#include "snknock/error.hpp"
#include "test_util.hpp"

using namespace snknock;
using namespace snknock::sim;

namespace {

/// Message of the ParseError thrown by parsing `text`, or "" if none.
std::string parse_error(std::string_view text) {
  try {
    parse_scenarios(text, "s.ini");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    return e.what();
  }
  FAIL("expected a parse error");
  return "";
}

constexpr std::string_view kFull = R"(# two scenarios
[scenario baseline]
victim_degree = 30
visibility_fraction = 0.5
list1_size = 4
n_networks = 2
probe_budget = 7
n_roots_final = 1
known_names = Bob Smith, Carol Jones
root_activity = 0.9
fake_activity = 0.1, 0.2
policies = none, voice_challenge
victim.base_p = 0.05      # trailing comment
victim.w_mutual = 0.6
victim.mutual_saturation = 5
victim.w_name = 0.1
victim.w_activity = 0.05
victim.profile_penalty = 0.4
victim.p_voice_pass = 0.02
friend.base_p = 0.3

[scenario second]
known_names = A, B
)";

}  // namespace

TEST_CASE("full scenario file") {
  const auto scenarios = parse_scenarios(kFull);
  REQUIRE(scenarios.size() == 2);
  const auto& s = scenarios[0];
  CHECK(s.name == "baseline");
  CHECK(s.victim_degree == 30);
  CHECK(s.visibility_fraction == 0.5);
  CHECK(s.plan.list1_size == 4);
  CHECK(s.plan.n_networks == 2);
  CHECK(s.plan.probe_budget == 7);
  CHECK(s.plan.n_roots_final == 1);
  CHECK(s.plan.known_name_pool == std::vector<std::string>{"Bob Smith", "Carol Jones"});
  CHECK(s.root_activity.min == 0.9);
  CHECK(s.root_activity.fixed());
  CHECK(s.fake_activity.min == 0.1);
  CHECK(s.fake_activity.max == 0.2);
  CHECK(s.policies == std::vector<PolicyKind>{PolicyKind::none, PolicyKind::voice_challenge});
  CHECK(s.victim_policy.base_p == 0.05);
  CHECK(s.victim_policy.w_mutual == 0.6);
  CHECK(s.victim_policy.mutual_saturation == 5);
  CHECK(s.victim_policy.w_name == 0.1);
  CHECK(s.victim_policy.w_activity == 0.05);
  CHECK(s.victim_policy.profile_penalty == 0.4);
  CHECK(s.victim_policy.p_voice_pass == 0.02);
  CHECK(s.friend_policy.base_p == 0.3);

  const auto& d = scenarios[1];
  CHECK(d.name == "second");
  CHECK(d.victim_degree == 20);
  CHECK(d.plan.n_networks == 3);
  CHECK(d.policies.size() == 3);
}

TEST_CASE("errors carry the offending line number") {
  CHECK(parse_error("[scenario a]\nknown_names = A, B\nbogus = 1\n") ==
        "s.ini:3: unknown key 'bogus'");
  CHECK(parse_error("[scenario a]\nknown_names = A, B\nvictim_degree = many\n")
            .starts_with("s.ini:3: 'victim_degree' expects an integer"));
  CHECK(parse_error("[scenario a]\nknown_names = A, B\nvictim.base_p = 0.x\n")
            .starts_with("s.ini:3: "));
  CHECK(parse_error("\n\nvictim_degree = 3\n").starts_with("s.ini:3: key 'victim_degree' outside"));
  CHECK(parse_error("[scenario a]\nknown_names = A, B\nknown_names = C, D\n")
            .starts_with("s.ini:3: duplicate key"));
  CHECK(parse_error("[scenario a]\nknown_names = A, B\n[scenario a]\n")
            .starts_with("s.ini:3: duplicate scenario"));
  CHECK(parse_error("[scenario a]\nknown_names = A, B\njust words\n")
            .starts_with("s.ini:3: expected 'key = value'"));
  CHECK(parse_error("[scenario a\n").starts_with("s.ini:1: unterminated"));
  CHECK(parse_error("[other a]\n").starts_with("s.ini:1: expected '[scenario NAME]'"));
  CHECK(parse_error("[scenario a]\nknown_names = A, B\npolicies = none, magic\n")
            .starts_with("s.ini:3: unknown policy kind 'magic'"));
  CHECK(parse_error("[scenario a]\nknown_names = A, B\nvictim.colour = red\n") ==
        "s.ini:3: unknown key 'victim.colour'");
  CHECK(parse_error("# only a comment\n").find("no [scenario NAME] sections") != std::string::npos);
  CHECK(parse_error("").find("no [scenario NAME] sections") != std::string::npos);
}

TEST_CASE("semantic errors point at the section header") {
  CHECK(parse_error("[scenario ok]\nknown_names = A, B\n\n[scenario bad]\nknown_names = A\n")
            .starts_with("s.ini:4: scenario 'bad': known_name_pool"));
  CHECK(parse_error("[scenario a]\nknown_names = A, B\nvictim.base_p = 2\n")
            .starts_with("s.ini:1: scenario 'a': base_p"));
  CHECK(parse_error("[scenario a]\nknown_names = A, B\nroot_activity = 0.9, 0.1\n")
            .starts_with("s.ini:1: scenario 'a': activity ranges"));
}

TEST_CASE("load_scenarios reads files and reports the path") {
  snknock::testing::TempDir dir;
  const auto path = (dir / "demo.ini").string();
  std::ofstream(path) << "[scenario demo]\r\nknown_names = A, B\r\n";
  const auto s = load_scenarios(path);
  REQUIRE(s.size() == 1);
  CHECK(s[0].name == "demo");
  try {
    load_scenarios((dir / "missing.ini").string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("missing.ini") != std::string::npos);
  }
}
