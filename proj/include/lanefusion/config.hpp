#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lanefusion/agents.hpp"
#include "lanefusion/fusion.hpp"
#include "lanefusion/traffic_sim.hpp"

namespace lanefusion {

enum class SweepMode { Retrain, Transfer };

struct SweepConfig {
  std::vector<int> counts = {5, 15, 25, 35, 45, 55, 65};
  SweepMode mode = SweepMode::Retrain;
  bool operator==(const SweepConfig&) const = default;
};

struct ExperimentConfig {
  SimConfig sim;
  AgentConfig agent;
  FusionConfig advisor;
  int episodes = 3000;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "runs";
  int eval_every = 50;            // periodic greedy evaluation, 0 = off
  int eval_probe_episodes = 5;    // episodes per periodic evaluation
  int eval_episodes = 100;        // final greedy evaluation (sweep, eval)
  int smoothing_window = 50;
  int final_window = 200;         // trailing episodes averaged by compare
  bool trajectory_dump = false;
  SweepConfig sweep;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Raised for unreadable, malformed, or invalid configuration. `key_path`
/// names the offending entry (e.g. "agent.gamma") when one is known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key_path, const std::string& message);
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

std::string_view sweep_mode_name(SweepMode mode);

nlohmann::json sim_config_to_json(const SimConfig& c);
nlohmann::json agent_config_to_json(const AgentConfig& c);
nlohmann::json fusion_config_to_json(const FusionConfig& c);
nlohmann::json config_to_json(const ExperimentConfig& c);

/// Strict parse: unknown keys are rejected, absent keys keep defaults.
SimConfig sim_config_from_json(const nlohmann::json& j, const std::string& path = "sim");
AgentConfig agent_config_from_json(const nlohmann::json& j, const std::string& path = "agent");
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace lanefusion
