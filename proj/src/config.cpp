#include "lanefusion/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace lanefusion {

namespace {

// Walks one JSON object, binding known keys and rejecting the rest.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class T>
  ObjectReader& field(const char* key, T& dst) {
    return custom(key, [&](const nlohmann::json& v, const std::string& where) {
      try {
        dst = v.get<T>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(where, "wrong type: " + std::string(v.type_name()));
      }
    });
  }

  ObjectReader& custom(const char* key,
                       const std::function<void(const nlohmann::json&, const std::string&)>& f) {
    known_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) f(*it, join(key));
    return *this;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known_.contains(it.key())) throw ConfigError(join(it.key()), "unknown key");
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> known_;
};

template <class Enum, class Parse>
auto enum_field(Enum& dst, Parse parse) {
  return [&dst, parse](const nlohmann::json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where, "expected a string");
    auto parsed = parse(v.get<std::string>());
    if (!parsed) throw ConfigError(where, "unrecognized value '" + v.get<std::string>() + "'");
    dst = *parsed;
  };
}

// validate() messages start with "<section>.<field>: ".
template <class F>
void rethrow_validation(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(": ");
    if (colon == std::string::npos) throw ConfigError("", msg);
    throw ConfigError(msg.substr(0, colon), msg.substr(colon + 2));
  }
}

std::optional<SweepMode> sweep_mode_from_name(std::string_view s) {
  if (s == "retrain") return SweepMode::Retrain;
  if (s == "transfer") return SweepMode::Transfer;
  return std::nullopt;
}

FusionConfig fusion_config_from_json(const nlohmann::json& j, const std::string& path) {
  FusionConfig c;
  ObjectReader(j, path)
      .custom("kind", enum_field(c.kind, advisor_kind_from_name))
      .field("delta_a", c.delta_a)
      .custom("mode", enum_field(c.mode, fusion_mode_from_name))
      .field("q_bias_beta", c.q_bias_beta)
      .field("deadline_ms", c.deadline_ms)
      .field("confidence_threshold", c.confidence_threshold)
      .field("adapt_threshold", c.adapt_threshold)
      .field("adapt_every", c.adapt_every)
      .field("replay_file", c.replay_file)
      .field("bridge_cmd", c.bridge_cmd)
      .finish();
  return c;
}

}  // namespace

ConfigError::ConfigError(const std::string& key_path, const std::string& message)
    : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
      key_path_(key_path) {}

std::string_view sweep_mode_name(SweepMode mode) {
  return mode == SweepMode::Retrain ? "retrain" : "transfer";
}

void ExperimentConfig::validate() const {
  sim.validate();
  agent.validate();
  advisor.validate();
  auto fail = [](const char* key, const char* what) {
    throw std::invalid_argument(std::string(key) + ": " + what);
  };
  if (episodes < 1) fail("episodes", "must be >= 1");
  if (seeds.empty()) fail("seeds", "must be non-empty");
  if (output_dir.empty()) fail("output_dir", "must be non-empty");
  if (eval_every < 0) fail("eval_every", "must be >= 0");
  if (eval_probe_episodes < 1) fail("eval_probe_episodes", "must be >= 1");
  if (eval_episodes < 1) fail("eval_episodes", "must be >= 1");
  if (smoothing_window < 1) fail("smoothing_window", "must be >= 1");
  if (final_window < 1) fail("final_window", "must be >= 1");
  if (sweep.counts.empty()) fail("sweep.counts", "must be non-empty");
  for (int c : sweep.counts)
    if (c < 0) fail("sweep.counts", "counts must be >= 0");
}

nlohmann::json sim_config_to_json(const SimConfig& c) {
  return {{"road_length", c.road_length},   {"lane_count", c.lane_count},
          {"lane_width", c.lane_width},     {"human_count", c.human_count},
          {"dt", c.dt},                     {"max_steps", c.max_steps},
          {"v_min_target", c.v_min_target}, {"v_max_target", c.v_max_target},
          {"accel_mag", c.accel_mag},       {"vehicle_length", c.vehicle_length},
          {"sensor_range", c.sensor_range}, {"safe_gap", c.safe_gap},
          {"rear_ttc_min", c.rear_ttc_min}, {"delta1", c.delta1},
          {"delta2", c.delta2},             {"delta3", c.delta3},
          {"speed_cap", c.speed_cap}};
}

nlohmann::json agent_config_to_json(const AgentConfig& c) {
  return {{"kind", agent_kind_name(c.kind)},
          {"gamma", c.gamma},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"tau", c.tau},
          {"warmup_transitions", c.warmup_transitions},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"epsilon_decay_fraction", c.epsilon_decay_fraction},
          {"train_every", c.train_every},
          {"use_shaped_reward", c.use_shaped_reward},
          {"buffer_capacity", c.buffer_capacity},
          {"hidden_width", c.hidden_width}};
}

nlohmann::json fusion_config_to_json(const FusionConfig& c) {
  return {{"kind", advisor_kind_name(c.kind)},
          {"delta_a", c.delta_a},
          {"mode", fusion_mode_name(c.mode)},
          {"q_bias_beta", c.q_bias_beta},
          {"deadline_ms", c.deadline_ms},
          {"confidence_threshold", c.confidence_threshold},
          {"adapt_threshold", c.adapt_threshold},
          {"adapt_every", c.adapt_every},
          {"replay_file", c.replay_file},
          {"bridge_cmd", c.bridge_cmd}};
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {{"sim", sim_config_to_json(c.sim)},
          {"agent", agent_config_to_json(c.agent)},
          {"advisor", fusion_config_to_json(c.advisor)},
          {"episodes", c.episodes},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir},
          {"eval_every", c.eval_every},
          {"eval_probe_episodes", c.eval_probe_episodes},
          {"eval_episodes", c.eval_episodes},
          {"smoothing_window", c.smoothing_window},
          {"final_window", c.final_window},
          {"trajectory_dump", c.trajectory_dump},
          {"sweep", {{"counts", c.sweep.counts}, {"mode", sweep_mode_name(c.sweep.mode)}}}};
}

SimConfig sim_config_from_json(const nlohmann::json& j, const std::string& path) {
  SimConfig c;
  ObjectReader(j, path)
      .field("road_length", c.road_length)
      .field("lane_count", c.lane_count)
      .field("lane_width", c.lane_width)
      .field("human_count", c.human_count)
      .field("dt", c.dt)
      .field("max_steps", c.max_steps)
      .field("v_min_target", c.v_min_target)
      .field("v_max_target", c.v_max_target)
      .field("accel_mag", c.accel_mag)
      .field("vehicle_length", c.vehicle_length)
      .field("sensor_range", c.sensor_range)
      .field("safe_gap", c.safe_gap)
      .field("rear_ttc_min", c.rear_ttc_min)
      .field("delta1", c.delta1)
      .field("delta2", c.delta2)
      .field("delta3", c.delta3)
      .field("speed_cap", c.speed_cap)
      .finish();
  return c;
}

AgentConfig agent_config_from_json(const nlohmann::json& j, const std::string& path) {
  AgentConfig c;
  ObjectReader(j, path)
      .custom("kind", enum_field(c.kind, agent_kind_from_name))
      .field("gamma", c.gamma)
      .field("lr", c.lr)
      .field("batch_size", c.batch_size)
      .field("tau", c.tau)
      .field("warmup_transitions", c.warmup_transitions)
      .field("epsilon_start", c.epsilon_start)
      .field("epsilon_end", c.epsilon_end)
      .field("epsilon_decay_fraction", c.epsilon_decay_fraction)
      .field("train_every", c.train_every)
      .field("use_shaped_reward", c.use_shaped_reward)
      .field("buffer_capacity", c.buffer_capacity)
      .field("hidden_width", c.hidden_width)
      .finish();
  return c;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  ObjectReader(j, "")
      .custom("sim", [&](const auto& v, const auto& p) { c.sim = sim_config_from_json(v, p); })
      .custom("agent", [&](const auto& v, const auto& p) { c.agent = agent_config_from_json(v, p); })
      .custom("advisor",
              [&](const auto& v, const auto& p) { c.advisor = fusion_config_from_json(v, p); })
      .field("episodes", c.episodes)
      .field("seeds", c.seeds)
      .field("output_dir", c.output_dir)
      .field("eval_every", c.eval_every)
      .field("eval_probe_episodes", c.eval_probe_episodes)
      .field("eval_episodes", c.eval_episodes)
      .field("smoothing_window", c.smoothing_window)
      .field("final_window", c.final_window)
      .field("trajectory_dump", c.trajectory_dump)
      .custom("sweep",
              [&](const auto& v, const auto& p) {
                ObjectReader(v, p)
                    .field("counts", c.sweep.counts)
                    .custom("mode", enum_field(c.sweep.mode, sweep_mode_from_name))
                    .finish();
              })
      .finish();
  rethrow_validation([&] { c.validate(); });
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace lanefusion
