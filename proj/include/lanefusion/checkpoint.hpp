#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "lanefusion/agents.hpp"
#include "lanefusion/qnet.hpp"

namespace lanefusion {

inline constexpr int kCheckpointVersion = 1;

/// {"format": "lanefusion.qnet", "version", "tensors": [{name, shape, data}]}.
/// Values are widened to double on disk, so save/load is lossless.
nlohmann::json network_to_json(const NetworkParams& params);
NetworkParams network_from_json(const nlohmann::json& j);

void save_network(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_network(const std::filesystem::path& path);

struct AgentCheckpoint {
  AgentConfig config;
  NetworkParams eval;
  NetworkParams target;
  AdamState<NetScalar> adam;
  std::size_t buffer_size = 0;
  std::size_t buffer_cursor = 0;
  std::size_t buffer_capacity = 0;
  int episodes_done = 0;
};

AgentCheckpoint make_checkpoint(const Agent& agent, const ReplayBuffer& buffer, int episodes_done);
void save_agent_checkpoint(const std::filesystem::path& path, const AgentCheckpoint& ckpt);
AgentCheckpoint load_agent_checkpoint(const std::filesystem::path& path);

/// Rebuilds an agent from a checkpoint (networks and optimizer state).
Agent restore_agent(const AgentCheckpoint& ckpt);

}  // namespace lanefusion
