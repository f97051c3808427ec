#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "lanefusion/qnet.hpp"
#include "lanefusion/traffic_sim.hpp"

namespace lanefusion {

enum class AgentKind { DQN, DDQN, D3QN };

std::string_view agent_kind_name(AgentKind kind);
std::optional<AgentKind> agent_kind_from_name(std::string_view name);

struct AgentConfig {
  AgentKind kind = AgentKind::D3QN;
  double gamma = 0.99;
  double lr = 0.001;
  int batch_size = 32;
  double tau = 0.005;
  int warmup_transitions = 1000;
  // Linear epsilon decay for the DQN/DDQN baselines.
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.3;
  int train_every = 1;
  bool use_shaped_reward = true;
  int buffer_capacity = 100000;
  int hidden_width = kDefaultHiddenWidth;

  void validate() const;
  bool operator==(const AgentConfig&) const = default;
};

struct Transition {
  Observation obs;
  int action = 0;
  double reward_env = 0.0;
  double reward_shaped = 0.0;
  Observation next_obs;
  bool done = false;
};

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void store(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }
  bool empty() const { return size_ == 0; }

  /// i-th oldest transition.
  const Transition& at(std::size_t i) const;

  /// Uniform draws with replacement; empty result when the buffer is empty.
  std::vector<std::size_t> sample_indices(std::size_t count, NetRng& rng) const;

 private:
  std::vector<Transition> items_;
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
};

class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Selection-time bias toward an advised action (Q-bias fusion mode).
struct QBias {
  Action action;
  double beta;
};

/// Evaluation/target network pair with optimizer state.
class Agent {
 public:
  Agent(const AgentConfig& config, NetRng& init_rng);
  Agent(const AgentConfig& config, NetworkParams eval, NetworkParams target,
        AdamState<NetScalar> adam);

  const AgentConfig& config() const { return config_; }
  AgentKind kind() const { return config_.kind; }
  bool uses_noise() const { return config_.kind == AgentKind::D3QN; }

  NetworkParams& eval_params() { return eval_; }
  const NetworkParams& eval_params() const { return eval_; }
  NetworkParams& target_params() { return target_; }
  const NetworkParams& target_params() const { return target_; }
  AdamState<NetScalar>& adam() { return adam_; }
  const AdamState<NetScalar>& adam() const { return adam_; }

  /// Exploration rate at a given fraction of the training schedule; 0 for D3QN.
  double epsilon(double episode_fraction) const;
  /// Mean absolute sigma over both noisy heads.
  double mean_noise_scale() const;

 private:
  AgentConfig config_;
  NetworkParams eval_;
  NetworkParams target_;
  AdamState<NetScalar> adam_;

  friend std::optional<double> train_step(Agent&, const ReplayBuffer&, NetRng&);
  LossAndGradient<NetScalar> scratch_;  // reused gradient storage
};

/// Index of the largest entry, lowest index on ties.
template <class Derived>
int argmax_lowest(const Eigen::DenseBase<Derived>& q) {
  int best = 0;
  for (int i = 1; i < q.size(); ++i)
    if (q(i) > q(best)) best = i;
  return best;
}

Action select_action(const Agent& agent, const Observation& obs, double episode_fraction,
                     NetRng& rng, std::optional<QBias> bias = std::nullopt);

/// Greedy action on zero noise; used for evaluation episodes.
Action greedy_action(const Agent& agent, const Observation& obs);

std::vector<double> compute_targets(AgentKind kind, std::span<const Transition* const> batch,
                                    const NetworkParams& eval_params,
                                    const NetworkParams& target_params, double gamma,
                                    bool use_shaped_reward);

/// One gradient step on a uniform minibatch. Returns nullopt while the
/// buffer holds fewer than warmup_transitions. Throws TrainingDivergence
/// on a non-finite loss.
std::optional<double> train_step(Agent& agent, const ReplayBuffer& buffer, NetRng& rng);

}  // namespace lanefusion
