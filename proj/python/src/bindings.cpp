#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "lanefusion/config.hpp"
#include "lanefusion/fusion.hpp"
#include "lanefusion/harness.hpp"
#include "lanefusion/traffic_sim.hpp"

namespace py = pybind11;
using namespace lanefusion;

namespace {

// Configs cross the boundary as JSON text; the Python side owns the dicts.
SimConfig sim_from_text(const std::string& text) {
  auto cfg = sim_config_from_json(nlohmann::json::parse(text));
  cfg.validate();
  return cfg;
}

std::vector<double> to_list(const Observation& obs) {
  return {obs.values.begin(), obs.values.end()};
}

Observation from_list(const std::vector<double>& values) {
  if (values.size() != static_cast<std::size_t>(kObservationDim))
    throw std::invalid_argument("observation must have " + std::to_string(kObservationDim) +
                                " entries");
  Observation obs;
  std::copy(values.begin(), values.end(), obs.values.begin());
  return obs;
}

Action parse_action(const py::object& a) {
  if (py::isinstance<py::str>(a)) {
    const auto name = a.cast<std::string>();
    if (auto parsed = action_from_name(name)) return *parsed;
    throw std::invalid_argument("unknown action '" + name + "'");
  }
  return action_from_index(a.cast<int>());
}

py::tuple recommendation_tuple(const AdvisorRecommendation& rec) {
  return py::make_tuple(std::string(action_name(rec.action)), rec.confidence, rec.rationale);
}

// Single-environment wrapper with the rule advisor attached.
class Env {
 public:
  Env(const std::string& sim_json, std::uint64_t seed)
      : config_(sim_from_text(sim_json)), state_(reset(config_, seed)) {}

  std::vector<double> reset_env(std::uint64_t seed) {
    state_ = lanefusion::reset(config_, seed);
    done_ = false;
    return to_list(observe(state_, config_));
  }

  py::tuple step_env(const py::object& action) {
    if (done_) throw std::logic_error("episode finished; call reset()");
    const auto r = lanefusion::step(state_, parse_action(action), config_);
    state_ = r.next_state;
    done_ = r.done;
    py::dict info;
    info["done_reason"] = std::string(done_reason_name(r.done_reason));
    info["safety"] = r.reward.safety;
    info["efficiency_speed"] = r.reward.efficiency_speed;
    info["efficiency_lane_change"] = r.reward.efficiency_lane_change;
    info["comfort"] = r.reward.comfort;
    info["lane_changed"] = r.lane_changed;
    info["aborted_lane_change"] = r.aborted_lane_change;
    return py::make_tuple(to_list(observe(state_, config_)), r.reward.env_total, r.done, info);
  }

  std::vector<double> observation() const { return to_list(observe(state_, config_)); }
  std::string scene_text() const { return scene_to_text(state_, config_); }
  py::tuple recommend() const { return recommendation_tuple(rule_recommendation(observe(state_, config_), config_)); }
  int step_index() const { return state_.step; }
  py::dict ego() const {
    py::dict d;
    d["position"] = state_.ego.longitudinal_pos;
    d["lane"] = state_.ego.lane;
    d["speed"] = state_.ego.speed;
    return d;
  }
  std::size_t human_count() const { return state_.humans.size(); }
  bool done() const { return done_; }

 private:
  SimConfig config_;
  SceneState state_;
  bool done_ = false;
};

}  // namespace

PYBIND11_MODULE(_lanefusion, m) {
  m.doc() = "Highway lane-change simulator, rule advisor and training harness.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.attr("OBSERVATION_DIM") = kObservationDim;
  m.def("action_names", [] {
    std::vector<std::string> out;
    for (Action a : kAllActions) out.emplace_back(action_name(a));
    return out;
  });

  m.def("default_config_json", [] { return config_to_json(ExperimentConfig{}).dump(); });
  m.def("normalize_config_json",
        [](const std::string& text) { return config_to_json(config_from_json(nlohmann::json::parse(text))).dump(); },
        "Parse, validate and re-serialize an experiment config.");

  m.def("idm_acceleration", &idm_acceleration, py::arg("gap"), py::arg("speed"),
        py::arg("leader_speed"), py::arg("desired_speed"));
  m.def("rule_recommendation",
        [](const std::vector<double>& obs, const std::string& sim_json) {
          return recommendation_tuple(rule_recommendation(from_list(obs), sim_from_text(sim_json)));
        },
        py::arg("obs"), py::arg("sim_json") = "{}");
  m.def("canonical_feedback_line",
        [](const std::string& line) { return feedback_to_line(feedback_from_json(nlohmann::json::parse(line))); });
  m.def("git_blob_sha1", [](const py::bytes& content) { return git_blob_sha1(std::string(content)); });

  m.def("train_run",
        [](const std::string& config_json, const std::string& scheme, std::uint64_t seed) {
          const auto cfg = config_from_json(nlohmann::json::parse(config_json));
          const auto s = scheme_from_name(scheme);
          if (!s) throw std::invalid_argument("unknown scheme '" + scheme + "'");
          RunArtifacts art;
          {
            py::gil_scoped_release release;
            art = train_run(cfg, *s, seed);
          }
          py::dict d;
          d["dir"] = art.dir.string();
          d["ok"] = art.ok;
          d["error"] = art.error;
          d["episodes"] = art.rows.size();
          d["agreements"] = art.agreements;
          d["disagreements"] = art.disagreements;
          d["feedback_lines"] = art.feedback_lines;
          std::vector<double> returns;
          for (const auto& r : art.rows) returns.push_back(r.return_env);
          d["return_env"] = returns;
          return d;
        },
        py::arg("config_json"), py::arg("scheme"), py::arg("seed"));

  py::class_<Env>(m, "Env")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("sim_json") = "{}",
           py::arg("seed") = 0)
      .def("reset", &Env::reset_env, py::arg("seed"))
      .def("step", &Env::step_env, py::arg("action"))
      .def("observation", &Env::observation)
      .def("scene_text", &Env::scene_text)
      .def("recommend", &Env::recommend)
      .def_property_readonly("step_index", &Env::step_index)
      .def_property_readonly("ego", &Env::ego)
      .def_property_readonly("human_count", &Env::human_count)
      .def_property_readonly("done", &Env::done);
}
