#include "snknock/clonesim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include "snknock/error.hpp"

namespace snknock::sim {

namespace {

[[noreturn]] void invalid_plan(const std::string& what) {
  throw Error(ErrorCode::InvalidPlan, what);
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng Rng::for_trial(std::uint64_t seed, std::uint64_t trial) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(trial + 0x632be59bd9b4e019ull)));
}

std::uint64_t Rng::index(std::uint64_t n) {
  // Rejection sampling keeps the result unbiased for any n.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % n;
  }
}

std::string_view to_string(AccountKind k) {
  switch (k) {
    case AccountKind::genuine: return "genuine";
    case AccountKind::fake: return "fake";
    case AccountKind::root: return "root";
  }
  return "genuine";
}

// ---------------------------------------------------------------- SimGraph

int SimGraph::add_account(AccountKind kind, std::string display_name, double activity_score,
                          int joined_tick) {
  const int id = static_cast<int>(accounts_.size());
  accounts_.push_back({id, kind, std::move(display_name), activity_score, joined_tick});
  adjacency_.emplace_back();
  return id;
}

void SimGraph::check(int id) const {
  if (!has_account(id))
    throw Error(ErrorCode::UnknownAccount, "unknown account " + std::to_string(id));
}

const SimAccount& SimGraph::account(int id) const {
  check(id);
  return accounts_[static_cast<std::size_t>(id)];
}

void SimGraph::rename(int id, std::string display_name) {
  check(id);
  accounts_[static_cast<std::size_t>(id)].display_name = std::move(display_name);
}

bool SimGraph::add_friendship(int a, int b) {
  check(a);
  check(b);
  if (a == b) invalid_plan("self friendship for account " + std::to_string(a));
  pending_.erase({a, b});
  pending_.erase({b, a});
  const bool inserted = adjacency_[static_cast<std::size_t>(a)].insert(b).second;
  adjacency_[static_cast<std::size_t>(b)].insert(a);
  return inserted;
}

bool SimGraph::are_friends(int a, int b) const {
  check(a);
  check(b);
  return adjacency_[static_cast<std::size_t>(a)].contains(b);
}

const std::set<int>& SimGraph::friends(int id) const {
  check(id);
  return adjacency_[static_cast<std::size_t>(id)];
}

int SimGraph::mutual_count(int a, int b) const {
  const auto& fa = friends(a);
  const auto& fb = friends(b);
  int n = 0;
  auto ia = fa.begin();
  auto ib = fb.begin();
  while (ia != fa.end() && ib != fb.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

std::size_t SimGraph::friendship_count() const {
  std::size_t total = 0;
  for (const auto& adj : adjacency_) total += adj.size();
  return total / 2;
}

void SimGraph::add_request(int from, int to) {
  check(from);
  check(to);
  if (from == to) invalid_plan("self request for account " + std::to_string(from));
  if (are_friends(from, to))
    invalid_plan("request between existing friends " + std::to_string(from) + " and " +
                 std::to_string(to));
  pending_.insert({from, to});
}

void SimGraph::remove_request(int from, int to) { pending_.erase({from, to}); }

std::vector<std::string> SimGraph::validate() const {
  std::vector<std::string> problems;
  for (std::size_t a = 0; a < adjacency_.size(); ++a) {
    for (int b : adjacency_[a]) {
      if (static_cast<std::size_t>(b) == a)
        problems.push_back("self-loop on " + std::to_string(a));
      else if (!has_account(b))
        problems.push_back("edge to unknown account " + std::to_string(b));
      else if (!adjacency_[static_cast<std::size_t>(b)].contains(static_cast<int>(a)))
        problems.push_back("asymmetric friendship " + std::to_string(a) + "->" + std::to_string(b));
    }
  }
  for (const auto& [from, to] : pending_) {
    if (from == to) problems.push_back("self request on " + std::to_string(from));
    if (has_account(from) && has_account(to) && are_friends(from, to))
      problems.push_back("pending request between friends " + std::to_string(from) + "," +
                         std::to_string(to));
  }
  for (const auto& acc : accounts_) {
    if (!(acc.activity_score >= 0.0) || !std::isfinite(acc.activity_score))
      problems.push_back("bad activity score on " + std::to_string(acc.id));
  }
  return problems;
}

// ---------------------------------------------------------------- policies

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::none: return "none";
    case PolicyKind::profile_check: return "profile_check";
    case PolicyKind::voice_challenge: return "voice_challenge";
  }
  return "none";
}

PolicyKind parse_policy_kind(std::string_view text) {
  if (text == "none") return PolicyKind::none;
  if (text == "profile_check") return PolicyKind::profile_check;
  if (text == "voice_challenge") return PolicyKind::voice_challenge;
  throw Error(ErrorCode::ParseError, "unknown policy kind '" + std::string(text) + "'");
}

void validate(const VictimPolicy& p) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(p.base_p) || p.base_p < 0.0 || p.base_p > 1.0) invalid_plan("base_p must be in [0,1]");
  if (!finite(p.w_mutual) || p.w_mutual < 0.0) invalid_plan("w_mutual must be >= 0");
  if (p.mutual_saturation < 1) invalid_plan("mutual_saturation must be >= 1");
  if (!finite(p.w_name) || p.w_name < 0.0) invalid_plan("w_name must be >= 0");
  if (!finite(p.w_activity) || p.w_activity < 0.0) invalid_plan("w_activity must be >= 0");
  if (!finite(p.profile_penalty) || p.profile_penalty < 0.0)
    invalid_plan("profile_penalty must be >= 0");
  if (!finite(p.p_voice_pass) || p.p_voice_pass < 0.0 || p.p_voice_pass > 1.0)
    invalid_plan("p_voice_pass must be in [0,1]");
}

double acceptance_probability(const VictimPolicy& policy, const RequestFeatures& f) {
  const int k = std::max(policy.mutual_saturation, 1);
  const double mutual = static_cast<double>(std::clamp(f.mutual_count, 0, k)) / k;
  const double p0 = clamp01(policy.base_p + policy.w_mutual * mutual +
                            policy.w_name * f.name_familiar + policy.w_activity * f.activity_score);
  double p1 = p0;
  // Tiers are cumulative: a voice-challenge victim also checks the profile.
  if (policy.kind != PolicyKind::none)
    p1 = clamp01(p0 - policy.profile_penalty * (1.0 - f.activity_score));
  if (policy.kind == PolicyKind::voice_challenge) return p1 * policy.p_voice_pass;
  return p1;
}

void validate(const AttackPlan& plan) {
  if (plan.list1_size < 2) invalid_plan("list1_size must be >= 2");
  if (plan.n_networks < 1) invalid_plan("n_networks must be >= 1");
  if (plan.probe_budget < 0) invalid_plan("probe_budget must be >= 0");
  if (plan.n_roots_final < 1) invalid_plan("n_roots_final must be >= 1");
  if (plan.n_roots_final > plan.n_networks) invalid_plan("n_roots_final must be <= n_networks");
  if (plan.known_name_pool.size() < static_cast<std::size_t>(plan.n_roots_final))
    invalid_plan("known_name_pool needs at least n_roots_final names");
}

// ---------------------------------------------------------------- stages

NetworkCore build_attacker_network(SimGraph& graph, Rng& rng, int list1_size,
                                   ActivityRange root_activity, ActivityRange fake_activity,
                                   int tick) {
  if (list1_size < 2) invalid_plan("list1_size must be >= 2");
  NetworkCore core;
  const int serial = static_cast<int>(graph.account_count());
  core.root = graph.add_account(AccountKind::root, "root-" + std::to_string(serial),
                                rng.uniform(root_activity.min, root_activity.max), tick);
  core.members.push_back(core.root);
  for (int i = 1; i < list1_size; ++i) {
    const int fake = graph.add_account(AccountKind::fake, "fake-" + std::to_string(serial + i),
                                       rng.uniform(fake_activity.min, fake_activity.max), tick);
    graph.add_friendship(core.root, fake);
    core.members.push_back(fake);
  }
  return core;
}

int list2_size(int degree, double visibility_fraction) {
  return static_cast<int>(std::lround(std::clamp(visibility_fraction, 0.0, 1.0) * degree));
}

std::vector<int> harvest_list2(const SimGraph& graph, int victim_id, double visibility_fraction,
                               Rng& rng) {
  if (!(visibility_fraction >= 0.0 && visibility_fraction <= 1.0))
    invalid_plan("visibility_fraction must be in [0,1]");
  const auto& fs = graph.friends(victim_id);
  std::vector<int> pool(fs.begin(), fs.end());
  const auto k = static_cast<std::size_t>(list2_size(static_cast<int>(pool.size()), visibility_fraction));
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::set<int> probe_weak(SimGraph& graph, const std::vector<int>& list2,
                         const std::vector<int>& prober_ids, const PolicyLookup& policy_of,
                         Rng& rng) {
  std::set<int> weak;
  if (list2.empty()) return weak;
  if (prober_ids.empty()) invalid_plan("probing needs at least one fake account");
  for (std::size_t i = 0; i < list2.size(); ++i) {
    const int target = list2[i];
    const int prober = prober_ids[i % prober_ids.size()];
    if (graph.are_friends(prober, target)) {
      weak.insert(target);
      continue;
    }
    graph.add_request(prober, target);
    const RequestFeatures f{0, 0, graph.account(prober).activity_score};
    if (rng.bernoulli(acceptance_probability(policy_of(target), f))) {
      graph.add_friendship(prober, target);
      weak.insert(target);
    } else {
      graph.remove_request(prober, target);
    }
  }
  return weak;
}

std::size_t connect_weak(SimGraph& graph, const std::vector<int>& list1_ids,
                         const std::set<int>& weak_ids) {
  std::size_t added = 0;
  for (int member : list1_ids)
    for (int weak : weak_ids)
      if (graph.add_friendship(member, weak)) ++added;
  return added;
}

GrowResult grow(SimGraph& graph, const AttackPlan& plan, const Environment& env, Rng& rng,
                const std::function<void(const SimGraph&)>& after_stage) {
  if (plan.list1_size < 2) invalid_plan("list1_size must be >= 2");
  if (plan.n_networks < 1) invalid_plan("n_networks must be >= 1");
  if (plan.probe_budget < 0) invalid_plan("probe_budget must be >= 0");
  auto checkpoint = [&] {
    if (after_stage) after_stage(graph);
  };

  GrowResult out;
  for (int n = 0; n < plan.n_networks; ++n) {
    NetworkCore core =
        build_attacker_network(graph, rng, plan.list1_size, env.root_activity, env.fake_activity, n);
    checkpoint();
    auto list2 = harvest_list2(graph, env.victim_id, env.visibility_fraction, rng);
    if (list2.size() > static_cast<std::size_t>(plan.probe_budget))
      list2.resize(static_cast<std::size_t>(plan.probe_budget));
    const std::vector<int> probers(core.members.begin() + 1, core.members.end());
    const auto weak = probe_weak(graph, list2, probers, env.friend_policy, rng);
    checkpoint();
    connect_weak(graph, core.members, weak);
    checkpoint();
    out.weak_found.insert(weak.begin(), weak.end());
    out.roots.push_back(core.root);
    out.networks.push_back(std::move(core));
  }
  return out;
}

StrikeResult final_strike(SimGraph& graph, const std::vector<int>& root_ids, int victim_id,
                          const VictimPolicy& policy, const AttackPlan& plan, Rng& rng) {
  if (plan.n_roots_final < 1) invalid_plan("n_roots_final must be >= 1");
  if (root_ids.size() < static_cast<std::size_t>(plan.n_roots_final))
    invalid_plan("fewer roots than n_roots_final");
  if (plan.known_name_pool.size() < static_cast<std::size_t>(plan.n_roots_final))
    invalid_plan("known_name_pool needs at least n_roots_final names");

  std::vector<std::pair<int, int>> ranked;  // (mutual, root)
  ranked.reserve(root_ids.size());
  for (int r : root_ids) ranked.emplace_back(graph.mutual_count(r, victim_id), r);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  ranked.resize(static_cast<std::size_t>(plan.n_roots_final));

  std::vector<std::size_t> names(plan.known_name_pool.size());
  for (std::size_t i = 0; i < names.size(); ++i) names[i] = i;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(names.size() - i));
    std::swap(names[i], names[j]);
  }
  for (std::size_t i = 0; i < ranked.size(); ++i)
    graph.rename(ranked[i].second, plan.known_name_pool[names[i]]);

  StrikeResult result;
  for (const auto& [mutual, root] : ranked) {
    RootOutcome o;
    o.root = root;
    o.name = graph.account(root).display_name;
    o.mutual_count = mutual;
    o.probability = acceptance_probability(policy, {mutual, 1, graph.account(root).activity_score});
    graph.add_request(root, victim_id);
    o.accepted = rng.bernoulli(o.probability);
    if (o.accepted)
      graph.add_friendship(root, victim_id);
    else
      graph.remove_request(root, victim_id);
    result.per_root.push_back(o);
    if (o.accepted) {
      result.success = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------- harness

void validate(const Scenario& s) {
  if (s.victim_degree < 0) invalid_plan("victim_degree must be >= 0");
  if (!(s.visibility_fraction >= 0.0 && s.visibility_fraction <= 1.0))
    invalid_plan("visibility_fraction must be in [0,1]");
  validate(s.plan);
  validate(s.victim_policy);
  validate(s.friend_policy);
  for (const auto* r : {&s.root_activity, &s.fake_activity})
    if (!(r->min >= 0.0 && r->min <= r->max && r->max <= 1.0))
      invalid_plan("activity ranges must satisfy 0 <= min <= max <= 1");
  if (s.policies.empty()) invalid_plan("at least one policy kind is required");
}

TrialOutcome run_trial(const Scenario& s, PolicyKind kind, Rng& rng,
                       const std::function<void(const SimGraph&)>& after_stage) {
  SimGraph graph;
  const int victim = graph.add_account(AccountKind::genuine, "victim", 0.5);
  for (int i = 0; i < s.victim_degree; ++i) {
    const int f = graph.add_account(AccountKind::genuine, "friend-" + std::to_string(i + 1), 0.5);
    graph.add_friendship(victim, f);
  }
  if (after_stage) after_stage(graph);

  const VictimPolicy& friend_policy = s.friend_policy;
  Environment env;
  env.victim_id = victim;
  env.visibility_fraction = s.visibility_fraction;
  env.root_activity = s.root_activity;
  env.fake_activity = s.fake_activity;
  env.friend_policy = [&friend_policy](int) -> const VictimPolicy& { return friend_policy; };

  const auto grown = grow(graph, s.plan, env, rng, after_stage);

  VictimPolicy victim_policy = s.victim_policy;
  victim_policy.kind = kind;
  const auto strike = final_strike(graph, grown.roots, victim, victim_policy, s.plan, rng);
  if (after_stage) after_stage(graph);

  TrialOutcome out;
  out.success = strike.success;
  out.weak_found = static_cast<int>(grown.weak_found.size());
  out.mutual_at_strike = strike.per_root.empty() ? 0 : strike.per_root.front().mutual_count;
  return out;
}

SimResult run_trials(const Scenario& scenario, PolicyKind kind, std::uint64_t seed,
                     std::uint64_t n_trials, unsigned threads) {
  validate(scenario);
  if (n_trials < 1) invalid_plan("n_trials must be >= 1");
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(
                                                         std::min<std::uint64_t>(n_trials, 256))));

  struct Sums {
    std::uint64_t successes = 0, weak = 0, mutual = 0;
  };
  std::vector<Sums> partial(threads);
  auto work = [&](unsigned t) {
    Sums& acc = partial[t];
    for (std::uint64_t i = t; i < n_trials; i += threads) {
      Rng rng = Rng::for_trial(seed, i);
      const auto o = run_trial(scenario, kind, rng);
      acc.successes += o.success ? 1 : 0;
      acc.weak += static_cast<std::uint64_t>(o.weak_found);
      acc.mutual += static_cast<std::uint64_t>(o.mutual_at_strike);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }

  Sums total;
  for (const auto& p : partial) {
    total.successes += p.successes;
    total.weak += p.weak;
    total.mutual += p.mutual;
  }
  SimResult r;
  r.scenario = scenario.name;
  r.policy = kind;
  r.trials = n_trials;
  r.successes = total.successes;
  r.success_rate = static_cast<double>(total.successes) / static_cast<double>(n_trials);
  r.weak_found_mean = static_cast<double>(total.weak) / static_cast<double>(n_trials);
  r.mutual_at_strike_mean = static_cast<double>(total.mutual) / static_cast<double>(n_trials);
  r.seed = seed;
  return r;
}

// ---------------------------------------------------------------- exact oracle

int decision_count(const Scenario& s) {
  const int probes = std::min(list2_size(s.victim_degree, s.visibility_fraction), s.plan.probe_budget);
  return s.plan.n_networks * std::max(probes, 0) + s.plan.n_roots_final;
}

namespace {

/// Walks every outcome path of the staged process without building graphs:
/// a root's mutual-friend count is the number of weak accounts its own
/// network recruited.
class ExactWalker {
 public:
  ExactWalker(const Scenario& s, PolicyKind kind)
      : s_(s),
        probes_(std::min(list2_size(s.victim_degree, s.visibility_fraction), s.plan.probe_budget)),
        p_probe_(acceptance_probability(s.friend_policy, {0, 0, s.fake_activity.min})),
        weak_(static_cast<std::size_t>(s.plan.n_networks), 0) {
    victim_ = s.victim_policy;
    victim_.kind = kind;
  }

  double run() {
    probe(0, 0, 1.0);
    return success_mass_;
  }

 private:
  void probe(int network, int i, double mass) {
    if (mass == 0.0) return;
    if (network == s_.plan.n_networks) return strike_all(mass);
    if (i == probes_) return probe(network + 1, 0, mass);
    auto& w = weak_[static_cast<std::size_t>(network)];
    ++w;
    probe(network, i + 1, mass * p_probe_);
    --w;
    probe(network, i + 1, mass * (1.0 - p_probe_));
  }

  void strike_all(double mass) {
    std::vector<std::size_t> order(weak_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return weak_[a] > weak_[b]; });
    order.resize(static_cast<std::size_t>(s_.plan.n_roots_final));
    strike(order, 0, mass);
  }

  void strike(const std::vector<std::size_t>& order, std::size_t k, double mass) {
    if (k == order.size() || mass == 0.0) return;
    const double p =
        acceptance_probability(victim_, {weak_[order[k]], 1, s_.root_activity.min});
    success_mass_ += mass * p;
    strike(order, k + 1, mass * (1.0 - p));
  }

  const Scenario& s_;
  VictimPolicy victim_;
  int probes_;
  double p_probe_;
  std::vector<int> weak_;
  double success_mass_ = 0.0;
};

}  // namespace

double enumerate_exact(const Scenario& scenario, PolicyKind kind) {
  validate(scenario);
  const int decisions = decision_count(scenario);
  if (decisions > kMaxEnumeratedDecisions)
    throw Error(ErrorCode::TooLarge, "scenario has " + std::to_string(decisions) +
                                         " Bernoulli decisions; at most " +
                                         std::to_string(kMaxEnumeratedDecisions) + " enumerable");
  if (!scenario.root_activity.fixed() || !scenario.fake_activity.fixed())
    throw Error(ErrorCode::NotEnumerable,
                "exact enumeration needs fixed root and fake activity scores");
  return ExactWalker(scenario, kind).run();
}

// ---------------------------------------------------------------- output

std::string format_result_line(const SimResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "scenario=%s policy=%s trials=%llu successes=%llu success_rate=%.4f "
                "weak_found_mean=%.4f mutual_at_strike_mean=%.4f seed=%llu",
                r.scenario.c_str(), std::string(to_string(r.policy)).c_str(),
                static_cast<unsigned long long>(r.trials),
                static_cast<unsigned long long>(r.successes), r.success_rate, r.weak_found_mean,
                r.mutual_at_strike_mean, static_cast<unsigned long long>(r.seed));
  return buf;
}

std::string csv_header() {
  return "scenario,policy,trials,successes,success_rate,weak_found_mean,mutual_at_strike_mean,seed";
}

std::string format_csv_row(const SimResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%llu,%llu,%.6f,%.6f,%.6f,%llu", r.scenario.c_str(),
                std::string(to_string(r.policy)).c_str(),
                static_cast<unsigned long long>(r.trials),
                static_cast<unsigned long long>(r.successes), r.success_rate, r.weak_found_mean,
                r.mutual_at_strike_mean, static_cast<unsigned long long>(r.seed));
  return buf;
}

}  // namespace snknock::sim
