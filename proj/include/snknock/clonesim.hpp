#pragma once

// Simulation of the staged profile-cloning attack:
//   1. build a star of fake accounts around a groomed Attacker(Root),
//   2. harvest the victim's visible friends (LIST(2)), probe them from
//      fakes and join every accepting ("weak") friend to the whole star,
//   3. repeat 1-2 to grow several independent networks,
//   4. rename the best-connected roots to names the victim knows and send
//      friend requests until one is accepted.
// The victim's reaction is a clamped-linear model over mutual friends, name
// familiarity and activity, with an optional profile check and voice gate.

#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace snknock::sim {

/// mt19937_64 with distribution helpers whose output does not depend on the
/// standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for trial `trial` of a run seeded with `seed`.
  static Rng for_trial(std::uint64_t seed, std::uint64_t trial);

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo == hi ? lo : lo + (hi - lo) * uniform01(); }
  /// Exactly false for p <= 0 and true for p >= 1.
  bool bernoulli(double p) { return uniform01() < p; }
  /// Uniform in [0, n). Requires n > 0.
  std::uint64_t index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

enum class AccountKind { genuine, fake, root };
std::string_view to_string(AccountKind k);

struct SimAccount {
  int id = 0;
  AccountKind kind = AccountKind::genuine;
  std::string display_name;
  double activity_score = 0.0;
  int joined_tick = 0;

  /// Roots are fake accounts too.
  bool is_fake() const { return kind != AccountKind::genuine; }
};

class SimGraph {
 public:
  int add_account(AccountKind kind, std::string display_name, double activity_score,
                  int joined_tick = 0);
  bool has_account(int id) const { return id >= 0 && id < static_cast<int>(accounts_.size()); }
  /// Throws UnknownAccount.
  const SimAccount& account(int id) const;
  std::size_t account_count() const { return accounts_.size(); }
  void rename(int id, std::string display_name);

  /// Adds {a, b} and clears any pending request between them. Returns false
  /// when the friendship already existed. Self-loops throw InvalidPlan.
  bool add_friendship(int a, int b);
  bool are_friends(int a, int b) const;
  const std::set<int>& friends(int id) const;
  int mutual_count(int a, int b) const;
  std::size_t friendship_count() const;

  /// Throws InvalidPlan when {from, to} are already friends.
  void add_request(int from, int to);
  void remove_request(int from, int to);
  bool has_request(int from, int to) const { return pending_.contains({from, to}); }
  std::size_t pending_count() const { return pending_.size(); }

  /// Empty when every structural invariant holds; otherwise one line per
  /// violation.
  std::vector<std::string> validate() const;

 private:
  void check(int id) const;

  std::vector<SimAccount> accounts_;
  std::vector<std::set<int>> adjacency_;
  std::set<std::pair<int, int>> pending_;
};

enum class PolicyKind { none, profile_check, voice_challenge };
std::string_view to_string(PolicyKind k);
/// Throws ParseError for unknown names.
PolicyKind parse_policy_kind(std::string_view text);

struct VictimPolicy {
  PolicyKind kind = PolicyKind::none;
  double base_p = 0.0;
  double w_mutual = 0.0;
  int mutual_saturation = 1;  // K
  double w_name = 0.0;
  double w_activity = 0.0;
  double profile_penalty = 0.0;
  double p_voice_pass = 1.0;
};

/// Throws InvalidPlan on out-of-range or non-finite parameters.
void validate(const VictimPolicy& policy);

struct RequestFeatures {
  int mutual_count = 0;
  int name_familiar = 0;  // 0 or 1
  double activity_score = 0.0;
};

/// p0 = clamp(base + w_mutual*min(m,K)/K + w_name*name + w_activity*act)
/// profile_check and voice_challenge: p1 = clamp(p0 - penalty*(1 - act));
/// voice_challenge then returns p1*p_voice_pass, so p_voice <= p_profile <= p_none.
double acceptance_probability(const VictimPolicy& policy, const RequestFeatures& features);

struct AttackPlan {
  int list1_size = 6;
  int n_networks = 3;
  int probe_budget = 10;
  int n_roots_final = 2;
  std::vector<std::string> known_name_pool;
};

void validate(const AttackPlan& plan);

struct ActivityRange {
  double min = 0.0;
  double max = 0.0;
  bool fixed() const { return min == max; }
};

struct NetworkCore {
  int root = -1;
  std::vector<int> members;  // LIST(1): root first, then fakes
};

/// Stage 1. Root activity is drawn from `root_activity`, fakes from
/// `fake_activity`; throws InvalidPlan for list1_size < 2.
NetworkCore build_attacker_network(SimGraph& graph, Rng& rng, int list1_size,
                                   ActivityRange root_activity = {0.7, 1.0},
                                   ActivityRange fake_activity = {0.0, 0.3}, int tick = 0);

/// round(fraction * degree), half away from zero.
int list2_size(int degree, double visibility_fraction);

/// Stage 2a. Uniform random subset of the victim's friends.
std::vector<int> harvest_list2(const SimGraph& graph, int victim_id, double visibility_fraction,
                               Rng& rng);

using PolicyLookup = std::function<const VictimPolicy&(int account_id)>;

/// Stage 2b. One request per LIST(2) account, probers used round-robin.
/// Accepting accounts become friends of their prober and are returned.
std::set<int> probe_weak(SimGraph& graph, const std::vector<int>& list2,
                         const std::vector<int>& prober_ids, const PolicyLookup& policy_of,
                         Rng& rng);

/// Stage 2c. Joins every LIST(1) member with every weak account. Returns the
/// number of new friendships.
std::size_t connect_weak(SimGraph& graph, const std::vector<int>& list1_ids,
                         const std::set<int>& weak_ids);

struct Environment {
  int victim_id = 0;
  double visibility_fraction = 1.0;
  ActivityRange root_activity{0.7, 1.0};
  ActivityRange fake_activity{0.0, 0.3};
  PolicyLookup friend_policy;
};

struct GrowResult {
  std::vector<int> roots;
  std::vector<NetworkCore> networks;
  std::set<int> weak_found;  // distinct across networks
};

/// Stage 3. Runs stages 1-2 n_networks times. `after_stage` (optional) is
/// invoked after every sub-step so callers can check graph invariants.
GrowResult grow(SimGraph& graph, const AttackPlan& plan, const Environment& env, Rng& rng,
                const std::function<void(const SimGraph&)>& after_stage = {});

struct RootOutcome {
  int root = -1;
  std::string name;
  int mutual_count = 0;
  double probability = 0.0;
  bool accepted = false;
};

struct StrikeResult {
  bool success = false;
  std::vector<RootOutcome> per_root;  // requests actually sent, in order
};

/// Stage 4. Picks the n_roots_final best-connected roots (ties by order in
/// `root_ids`), renames them to distinct names from the pool and sends
/// requests one by one until the victim accepts.
StrikeResult final_strike(SimGraph& graph, const std::vector<int>& root_ids, int victim_id,
                          const VictimPolicy& policy, const AttackPlan& plan, Rng& rng);

struct Scenario {
  std::string name = "default";
  int victim_degree = 20;
  double visibility_fraction = 1.0;
  AttackPlan plan;
  VictimPolicy victim_policy;
  VictimPolicy friend_policy;
  ActivityRange root_activity{0.7, 1.0};
  ActivityRange fake_activity{0.0, 0.3};
  std::vector<PolicyKind> policies{PolicyKind::none, PolicyKind::profile_check,
                                   PolicyKind::voice_challenge};
};

void validate(const Scenario& scenario);

struct TrialOutcome {
  bool success = false;
  int weak_found = 0;
  int mutual_at_strike = 0;
};

/// One full attack with the victim using `kind`. Trials sharing a stream
/// see the same graph up to the final strike whatever the kind.
TrialOutcome run_trial(const Scenario& scenario, PolicyKind kind, Rng& rng,
                       const std::function<void(const SimGraph&)>& after_stage = {});

struct SimResult {
  std::string scenario;
  PolicyKind policy = PolicyKind::none;
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
  double success_rate = 0.0;
  double weak_found_mean = 0.0;
  double mutual_at_strike_mean = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const SimResult&) const = default;
};

/// Monte Carlo over independent per-trial streams; identical for fixed
/// (scenario, kind, seed, n_trials) regardless of `threads`.
SimResult run_trials(const Scenario& scenario, PolicyKind kind, std::uint64_t seed,
                     std::uint64_t n_trials, unsigned threads = 1);

inline constexpr int kMaxEnumeratedDecisions = 20;

/// Bernoulli decisions in one trial: probes over all networks plus strikes.
int decision_count(const Scenario& scenario);

/// Exact success probability by summing over every probe/strike outcome
/// path. Throws TooLarge above kMaxEnumeratedDecisions and NotEnumerable
/// when activity scores are random.
double enumerate_exact(const Scenario& scenario, PolicyKind kind);

/// "scenario=... policy=... trials=... successes=... success_rate=0.1234 ..."
std::string format_result_line(const SimResult& r);
std::string csv_header();
std::string format_csv_row(const SimResult& r);

/// INI-style scenario file; see docs/scenario-format.md. Syntax errors and
/// invalid values throw ParseError as "{origin}:{line}: ...".
std::vector<Scenario> parse_scenarios(std::string_view text, std::string_view origin = "<input>");
std::vector<Scenario> load_scenarios(const std::string& path);

}  // namespace snknock::sim
