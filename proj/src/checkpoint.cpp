#include "lanefusion/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lanefusion/config.hpp"

namespace lanefusion {

namespace {

template <class Tensor>
nlohmann::json tensor_to_json(const char* name, const Tensor& t) {
  std::vector<double> data(static_cast<std::size_t>(t.size()));
  // Row-major on disk regardless of Eigen's storage order.
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) data[k++] = static_cast<double>(t(r, c));
  return {{"name", name}, {"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}};
}

template <class Tensor>
void tensor_from_json(const nlohmann::json& j, const char* name, Tensor& t) {
  if (j.at("name").get<std::string>() != name)
    throw std::runtime_error(std::string("checkpoint: expected tensor ") + name);
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto& data = j.at("data");
  if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1])
    throw std::runtime_error(std::string("checkpoint: bad shape for ") + name);
  if constexpr (Tensor::ColsAtCompileTime == 1) {
    if (shape[1] != 1) throw std::runtime_error(std::string("checkpoint: bias not a vector: ") + name);
    t.resize(shape[0]);
  } else {
    t.resize(shape[0], shape[1]);
  }
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < shape[0]; ++r)
    for (Eigen::Index c = 0; c < shape[1]; ++c) 
        t(r, c) = static_cast<typename Tensor::Scalar>(data[k++].get<double>());
}

template <class Tree>
nlohmann::json tree_to_json(const Tree& tree, const char* format) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t i = 0;
  for_each_tensor([&](const auto& t) { tensors.push_back(tensor_to_json(kTensorNames[i++], t)); },
                  tree);
  return {{"format", format}, {"version", kCheckpointVersion}, {"tensors", std::move(tensors)}};
}

template <class Tree>
Tree tree_from_json(const nlohmann::json& j, const char* format) {
  if (j.at("format").get<std::string>() != format)
    throw std::runtime_error(std::string("checkpoint: expected format ") + format);
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  const auto& tensors = j.at("tensors");
  if (tensors.size() != kTensorNames.size()) throw std::runtime_error("checkpoint: tensor count");
  Tree tree;
  std::size_t i = 0;
  for_each_tensor(
      [&](auto& t) {
        tensor_from_json(tensors[i], kTensorNames[i], t);
        ++i;
      },
      tree);
  return tree;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

nlohmann::json network_to_json(const NetworkParams& params) {
  return tree_to_json(params, "lanefusion.qnet");
}

NetworkParams network_from_json(const nlohmann::json& j) {
  return tree_from_json<NetworkParams>(j, "lanefusion.qnet");
}

void save_network(const std::filesystem::path& path, const NetworkParams& params) {
  write_json(path, network_to_json(params));
}

NetworkParams load_network(const std::filesystem::path& path) {
  return network_from_json(read_json(path));
}

AgentCheckpoint make_checkpoint(const Agent& agent, const ReplayBuffer& buffer, int episodes_done) {
  AgentCheckpoint c;
  c.config = agent.config();
  c.eval = agent.eval_params();
  c.target = agent.target_params();
  c.adam = agent.adam();
  c.buffer_size = buffer.size();
  c.buffer_cursor = buffer.cursor();
  c.buffer_capacity = buffer.capacity();
  c.episodes_done = episodes_done;
  return c;
}

void save_agent_checkpoint(const std::filesystem::path& path, const AgentCheckpoint& c) {
  nlohmann::json j;
  j["format"] = "lanefusion.agent";
  j["version"] = kCheckpointVersion;
  j["config"] = agent_config_to_json(c.config);
  j["eval"] = network_to_json(c.eval);
  j["target"] = network_to_json(c.target);
  j["adam"] = {{"timestep", c.adam.timestep},
               {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"epsilon", c.adam.epsilon},
               {"first_moment", tree_to_json(c.adam.first_moment, "lanefusion.moment")},
               {"second_moment", tree_to_json(c.adam.second_moment, "lanefusion.moment")}};
  j["buffer"] = {{"size", c.buffer_size}, {"cursor", c.buffer_cursor}, {"capacity", c.buffer_capacity}};
  j["episodes_done"] = c.episodes_done;
  write_json(path, j);
}

AgentCheckpoint load_agent_checkpoint(const std::filesystem::path& path) {
  const auto j = read_json(path);
  if (j.at("format").get<std::string>() != "lanefusion.agent")
    throw std::runtime_error("not an agent checkpoint: " + path.string());
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  AgentCheckpoint c;
  c.config = agent_config_from_json(j.at("config"));
  c.eval = network_from_json(j.at("eval"));
  c.target = network_from_json(j.at("target"));
  const auto& adam = j.at("adam");
  c.adam.timestep = adam.at("timestep").get<std::int64_t>();
  c.adam.beta1 = adam.at("beta1").get<double>();
  c.adam.beta2 = adam.at("beta2").get<double>();
  c.adam.epsilon = adam.at("epsilon").get<double>();
  c.adam.first_moment = tree_from_json<GradientSet>(adam.at("first_moment"), "lanefusion.moment");
  c.adam.second_moment = tree_from_json<GradientSet>(adam.at("second_moment"), "lanefusion.moment");
  const auto& buffer = j.at("buffer");
  c.buffer_size = buffer.at("size").get<std::size_t>();
  c.buffer_cursor = buffer.at("cursor").get<std::size_t>();
  c.buffer_capacity = buffer.at("capacity").get<std::size_t>();
  c.episodes_done = j.at("episodes_done").get<int>();
  return c;
}

Agent restore_agent(const AgentCheckpoint& ckpt) {
  return Agent(ckpt.config, ckpt.eval, ckpt.target, ckpt.adam);
}

}  // namespace lanefusion
