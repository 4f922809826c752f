#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "snknock/clonesim.hpp"
#include "snknock/error.hpp"

namespace snknock::sim {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view origin) : origin_(origin) {}

  [[noreturn]] void fail(int line, const std::string& what) const {
    throw Error(ErrorCode::ParseError,
                std::string(origin_) + ":" + std::to_string(line) + ": " + what);
  }

  double real(int line, std::string_view key, std::string_view v) const {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
      fail(line, "'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    return out;
  }

  int integer(int line, std::string_view key, std::string_view v) const {
    int out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      fail(line, "'" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
    return out;
  }

  ActivityRange range(int line, std::string_view key, std::string_view v) const {
    const auto parts = split_list(v);
    if (parts.size() == 1) {
      const double x = real(line, key, parts[0]);
      return {x, x};
    }
    if (parts.size() != 2) fail(line, "'" + std::string(key) + "' expects 'min, max'");
    return {real(line, key, parts[0]), real(line, key, parts[1])};
  }

  bool policy_key(int line, std::string_view field, std::string_view v, VictimPolicy& p) const {
    if (field == "kind") {
      try {
        p.kind = parse_policy_kind(v);
      } catch (const Error& e) {
        fail(line, e.what());
      }
    } else if (field == "base_p") {
      p.base_p = real(line, field, v);
    } else if (field == "w_mutual") {
      p.w_mutual = real(line, field, v);
    } else if (field == "mutual_saturation") {
      p.mutual_saturation = integer(line, field, v);
    } else if (field == "w_name") {
      p.w_name = real(line, field, v);
    } else if (field == "w_activity") {
      p.w_activity = real(line, field, v);
    } else if (field == "profile_penalty") {
      p.profile_penalty = real(line, field, v);
    } else if (field == "p_voice_pass") {
      p.p_voice_pass = real(line, field, v);
    } else {
      return false;
    }
    return true;
  }

  void assign(int line, Scenario& s, std::string_view key, std::string_view v) const {
    if (key == "victim_degree") {
      s.victim_degree = integer(line, key, v);
    } else if (key == "visibility_fraction") {
      s.visibility_fraction = real(line, key, v);
    } else if (key == "list1_size") {
      s.plan.list1_size = integer(line, key, v);
    } else if (key == "n_networks") {
      s.plan.n_networks = integer(line, key, v);
    } else if (key == "probe_budget") {
      s.plan.probe_budget = integer(line, key, v);
    } else if (key == "n_roots_final") {
      s.plan.n_roots_final = integer(line, key, v);
    } else if (key == "known_names") {
      s.plan.known_name_pool = split_list(v);
    } else if (key == "root_activity") {
      s.root_activity = range(line, key, v);
    } else if (key == "fake_activity") {
      s.fake_activity = range(line, key, v);
    } else if (key == "policies") {
      s.policies.clear();
      for (const auto& name : split_list(v)) {
        try {
          s.policies.push_back(parse_policy_kind(name));
        } catch (const Error& e) {
          fail(line, e.what());
        }
      }
    } else if (key.starts_with("victim.")) {
      if (!policy_key(line, key.substr(7), v, s.victim_policy))
        fail(line, "unknown key '" + std::string(key) + "'");
    } else if (key.starts_with("friend.")) {
      if (!policy_key(line, key.substr(7), v, s.friend_policy))
        fail(line, "unknown key '" + std::string(key) + "'");
    } else {
      fail(line, "unknown key '" + std::string(key) + "'");
    }
  }

  std::vector<Scenario> parse(std::string_view text) {
    std::vector<Scenario> out;
    std::vector<int> header_lines;
    std::set<std::string> names;
    std::set<std::string> seen_keys;
    int line_no = 0;
    while (!text.empty() || line_no == 0) {
      ++line_no;
      const auto eol = text.find('\n');
      std::string_view line = text.substr(0, eol);
      text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
      if (const auto hash = line.find('#'); hash != std::string_view::npos)
        line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) {
        if (text.empty()) break;
        continue;
      }

      if (line.front() == '[') {
        if (line.back() != ']') fail(line_no, "unterminated section header");
        const auto inner = trim(line.substr(1, line.size() - 2));
        if (!inner.starts_with("scenario"))
          fail(line_no, "expected '[scenario NAME]'");
        const auto name = trim(inner.substr(8));
        if (name.empty() || name.find_first_of(" \t,=") != std::string_view::npos)
          fail(line_no, "scenario name must be a single non-empty word");
        if (!names.insert(std::string(name)).second)
          fail(line_no, "duplicate scenario '" + std::string(name) + "'");
        Scenario s;
        s.name = std::string(name);
        out.push_back(std::move(s));
        header_lines.push_back(line_no);
        seen_keys.clear();
        continue;
      }

      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (key.empty()) fail(line_no, "missing key before '='");
      if (out.empty()) fail(line_no, "key '" + std::string(key) + "' outside a [scenario] section");
      if (!seen_keys.insert(std::string(key)).second)
        fail(line_no, "duplicate key '" + std::string(key) + "'");
      assign(line_no, out.back(), key, value);
    }

    if (out.empty()) fail(line_no, "no [scenario NAME] sections found");
    for (std::size_t i = 0; i < out.size(); ++i) {
      try {
        validate(out[i]);
      } catch (const Error& e) {
        fail(header_lines[i], "scenario '" + out[i].name + "': " + e.what());
      }
    }
    return out;
  }

 private:
  std::string_view origin_;
};

}  // namespace

std::vector<Scenario> parse_scenarios(std::string_view text, std::string_view origin) {
  return Parser(origin).parse(text);
}

std::vector<Scenario> load_scenarios(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, path + ": cannot read scenario file");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_scenarios(text, path);
}

}  // namespace snknock::sim
