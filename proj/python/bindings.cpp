// Python bindings: challenge helpers, the record store, and the attack
// simulator. Errors surface as snknock.SnknockError("<Code>: message").

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

#include "snknock/challenge.hpp"
#include "snknock/clonesim.hpp"
#include "snknock/digest.hpp"
#include "snknock/error.hpp"
#include "snknock/store.hpp"

namespace py = pybind11;
using namespace snknock;

namespace {

py::dict challenge_dict(const ChallengeRecord& c) {
  py::dict d;
  d["challenge_id"] = *c.id;
  d["owner_email"] = c.owner_email;
  d["questions"] = c.question_lines;
  d["language"] = std::string(to_string(c.language));
  d["created_at"] = format_iso8601(c.created_at);
  return d;
}

py::dict answer_dict(const AnswerRecord& a) {
  py::dict d;
  d["answer_id"] = *a.id;
  d["challenge_id"] = a.challenge_id;
  d["audio_name"] = a.audio_name;
  d["media_type"] = a.media_type;
  d["size_bytes"] = a.size_bytes;
  d["submitted_at"] = format_iso8601(a.submitted_at);
  d["decision"] = std::string(to_string(a.decision));
  d["decided_at"] = a.decided_at ? py::object(py::str(format_iso8601(*a.decided_at))) : py::none();
  d["notified"] = a.notified;
  return d;
}

py::dict result_dict(const sim::SimResult& r) {
  py::dict d;
  d["scenario"] = r.scenario;
  d["policy"] = std::string(sim::to_string(r.policy));
  d["trials"] = r.trials;
  d["successes"] = r.successes;
  d["success_rate"] = r.success_rate;
  d["weak_found_mean"] = r.weak_found_mean;
  d["mutual_at_strike_mean"] = r.mutual_at_strike_mean;
  d["seed"] = r.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "snknock voice-challenge verification service and cloning-attack simulator";

  static py::exception<Error> error_type(m, "SnknockError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  // ---- challenges
  m.def("serialize_questions", &serialize_questions, py::arg("lines"));
  m.def("split_questions", &split_questions, py::arg("stored"));
  m.def(
      "build_answer_url",
      [](std::string_view base, std::string_view lang, std::int64_t id) {
        return build_answer_url(base, parse_language(lang), id);
      },
      py::arg("base_url"), py::arg("language"), py::arg("challenge_id"));
  m.def(
      "suggested_questions",
      [](std::string_view lang) { return suggested_questions(parse_language(lang)); },
      py::arg("language") = "en");
  m.def(
      "new_answer_name",
      [](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return new_answer_name(rng);
      },
      py::arg("seed"));
  m.def("is_valid_answer_name", &is_valid_answer_name, py::arg("name"));
  m.def("is_valid_email", &is_valid_email, py::arg("email"));
  m.def(
      "sha256_hex", [](const py::bytes& data) { return sha256_hex(std::string(data)); },
      py::arg("data"));

  // ---- store
  py::class_<Store>(m, "Store")
      .def(py::init([](const std::string& data_dir) {
             return std::make_unique<Store>(StoreOptions{data_dir});
           }),
           py::arg("data_dir"))
      .def(
          "create_challenge",
          [](Store& s, const std::string& email, const std::vector<std::string>& questions,
             std::string_view lang) {
            return *s.put_challenge(new_challenge(email, questions, parse_language(lang))).id;
          },
          py::arg("email"), py::arg("questions"), py::arg("language") = "en")
      .def(
          "challenge", [](const Store& s, std::int64_t id) { return challenge_dict(s.get_challenge(id)); },
          py::arg("challenge_id"))
      .def(
          "put_answer",
          [](Store& s, std::int64_t challenge_id, const py::bytes& audio, const std::string& media_type,
             std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            AnswerRecord a;
            a.challenge_id = challenge_id;
            a.audio_name = new_answer_name(rng);
            a.submitted_at = now();
            return answer_dict(s.put_answer(a, {std::string(audio), media_type}));
          },
          py::arg("challenge_id"), py::arg("audio"), py::arg("media_type") = "audio/webm",
          py::arg("seed") = std::random_device{}())
      .def(
          "answers",
          [](const Store& s, std::int64_t challenge_id) {
            py::list out;
            for (const auto& a : s.list_answers(challenge_id)) out.append(answer_dict(a));
            return out;
          },
          py::arg("challenge_id"))
      .def(
          "blob", [](const Store& s, const std::string& name) { return py::bytes(s.get_blob(name).bytes); },
          py::arg("audio_name"))
      .def(
          "decide",
          [](Store& s, std::int64_t answer_id, std::string_view verdict) {
            const auto d = parse_decision(verdict);
            if (!d) throw Error(ErrorCode::InvalidTransition, "unknown verdict");
            auto a = decide_answer(s.get_answer(answer_id), *d, now());
            s.update_answer_decision(a);
            return answer_dict(a);
          },
          py::arg("answer_id"), py::arg("verdict"));

  // ---- simulator
  auto simm = m.def_submodule("sim", "Monte Carlo model of the staged cloning attack");

  py::class_<sim::VictimPolicy>(simm, "VictimPolicy")
      .def(py::init<>())
      .def_property(
          "kind", [](const sim::VictimPolicy& p) { return std::string(sim::to_string(p.kind)); },
          [](sim::VictimPolicy& p, std::string_view k) { p.kind = sim::parse_policy_kind(k); })
      .def_readwrite("base_p", &sim::VictimPolicy::base_p)
      .def_readwrite("w_mutual", &sim::VictimPolicy::w_mutual)
      .def_readwrite("mutual_saturation", &sim::VictimPolicy::mutual_saturation)
      .def_readwrite("w_name", &sim::VictimPolicy::w_name)
      .def_readwrite("w_activity", &sim::VictimPolicy::w_activity)
      .def_readwrite("profile_penalty", &sim::VictimPolicy::profile_penalty)
      .def_readwrite("p_voice_pass", &sim::VictimPolicy::p_voice_pass);

  py::class_<sim::Scenario>(simm, "Scenario")
      .def_readonly("name", &sim::Scenario::name)
      .def_readwrite("victim_degree", &sim::Scenario::victim_degree)
      .def_readwrite("visibility_fraction", &sim::Scenario::visibility_fraction)
      .def_readwrite("victim_policy", &sim::Scenario::victim_policy)
      .def_readwrite("friend_policy", &sim::Scenario::friend_policy)
      .def_property_readonly("policies", [](const sim::Scenario& s) {
        std::vector<std::string> out;
        for (auto k : s.policies) out.emplace_back(sim::to_string(k));
        return out;
      });

  simm.def(
      "acceptance_probability",
      [](const sim::VictimPolicy& p, int mutual_count, int name_familiar, double activity) {
        return sim::acceptance_probability(p, {mutual_count, name_familiar, activity});
      },
      py::arg("policy"), py::arg("mutual_count") = 0, py::arg("name_familiar") = 0,
      py::arg("activity_score") = 0.0);
  simm.def(
      "parse_scenarios",
      [](std::string_view text, std::string_view origin) { return sim::parse_scenarios(text, origin); },
      py::arg("text"), py::arg("origin") = "<input>");
  simm.def("load_scenarios", &sim::load_scenarios, py::arg("path"));
  simm.def(
      "run_trials",
      [](const sim::Scenario& s, std::string_view kind, std::uint64_t seed, std::uint64_t trials,
         unsigned threads) {
        const auto k = sim::parse_policy_kind(kind);
        sim::SimResult r;
        {
          py::gil_scoped_release release;
          r = sim::run_trials(s, k, seed, trials, threads);
        }
        return result_dict(r);
      },
      py::arg("scenario"), py::arg("policy"), py::arg("seed") = 1, py::arg("trials") = 10000,
      py::arg("threads") = 1);
  simm.def(
      "enumerate_exact",
      [](const sim::Scenario& s, std::string_view kind) {
        return sim::enumerate_exact(s, sim::parse_policy_kind(kind));
      },
      py::arg("scenario"), py::arg("policy"));
  simm.def("decision_count", &sim::decision_count, py::arg("scenario"));
  simm.def(
      "format_result_line",
      [](const py::dict& d) {
        sim::SimResult r;
        r.scenario = d["scenario"].cast<std::string>();
        r.policy = sim::parse_policy_kind(d["policy"].cast<std::string>());
        r.trials = d["trials"].cast<std::uint64_t>();
        r.successes = d["successes"].cast<std::uint64_t>();
        r.success_rate = d["success_rate"].cast<double>();
        r.weak_found_mean = d["weak_found_mean"].cast<double>();
        r.mutual_at_strike_mean = d["mutual_at_strike_mean"].cast<double>();
        r.seed = d["seed"].cast<std::uint64_t>();
        return sim::format_result_line(r);
      },
      py::arg("result"));
}
