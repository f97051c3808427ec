#include "lanefusion/agents.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lanefusion {

std::string_view agent_kind_name(AgentKind kind) {
  switch (kind) {
    case AgentKind::DQN: return "dqn";
    case AgentKind::DDQN: return "ddqn";
    case AgentKind::D3QN: return "d3qn";
  }
  return "d3qn";
}

std::optional<AgentKind> agent_kind_from_name(std::string_view name) {
  if (name == "dqn") return AgentKind::DQN;
  if (name == "ddqn") return AgentKind::DDQN;
  if (name == "d3qn") return AgentKind::D3QN;
  return std::nullopt;
}

void AgentConfig::validate() const {
  auto fail = [](const char* field, const char* what) {
    throw std::invalid_argument(std::string("agent.") + field + ": " + what);
  };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma", "must be in (0, 1]");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau", "must be in (0, 1]");
  if (warmup_transitions < 0) fail("warmup_transitions", "must be >= 0");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) fail("epsilon_start", "must be in [0, 1]");
  if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) fail("epsilon_end", "must be in [0, 1]");
  if (!(epsilon_decay_fraction > 0.0 && epsilon_decay_fraction <= 1.0))
    fail("epsilon_decay_fraction", "must be in (0, 1]");
  if (train_every < 1) fail("train_every", "must be >= 1");
  if (buffer_capacity < 1) fail("buffer_capacity", "must be >= 1");
  if (hidden_width < 1) fail("hidden_width", "must be >= 1");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be >= 1");
  items_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::store(const Transition& t) {
  if (items_.size() < capacity_) {
    items_.push_back(t);
  } else {
    items_[cursor_] = t;
  }
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("replay buffer index");
  // Once full, the oldest item sits at the cursor.
  const std::size_t start = size_ < capacity_ ? 0 : cursor_;
  return items_[(start + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count, NetRng& rng) const {
  std::vector<std::size_t> out;
  if (size_ == 0) return out;
  std::uniform_int_distribution<std::size_t> dist(0, size_ - 1);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(dist(rng));
  return out;
}

Agent::Agent(const AgentConfig& config, NetRng& init_rng) : config_(config) {
  config_.validate();
  eval_ = init_network<NetScalar>(kObservationDim, kActionCount, init_rng, config_.hidden_width);
  target_ = eval_;
  adam_ = make_adam_state(eval_);
}

Agent::Agent(const AgentConfig& config, NetworkParams eval, NetworkParams target,
             AdamState<NetScalar> adam)
    : config_(config), eval_(std::move(eval)), target_(std::move(target)), adam_(std::move(adam)) {
  config_.validate();
}

double Agent::epsilon(double episode_fraction) const {
  if (uses_noise()) return 0.0;
  const double progress = std::clamp(episode_fraction / config_.epsilon_decay_fraction, 0.0, 1.0);
  return config_.epsilon_start + (config_.epsilon_end - config_.epsilon_start) * progress;
}

double Agent::mean_noise_scale() const {
  const auto& v = eval_.value_head;
  const auto& a = eval_.advantage_head;
  const double total =
      static_cast<double>(v.weight_sigma.cwiseAbs().sum() + v.bias_sigma.cwiseAbs().sum() +
                          a.weight_sigma.cwiseAbs().sum() + a.bias_sigma.cwiseAbs().sum());
  const auto count = v.weight_sigma.size() + v.bias_sigma.size() + a.weight_sigma.size() +
                     a.bias_sigma.size();
  return total / static_cast<double>(count);
}

Action select_action(const Agent& agent, const Observation& obs, double episode_fraction,
                     NetRng& rng, std::optional<QBias> bias) {
  const auto& params = agent.eval_params();
  Vec<NetScalar> q;
  if (agent.uses_noise()) {
    q = forward(params, obs, sample_noise(params, rng));
  } else {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < agent.epsilon(episode_fraction)) {
      std::uniform_int_distribution<int> pick(0, kActionCount - 1);
      return action_from_index(pick(rng));
    }
    q = forward(params, obs, zero_noise(params));
  }
  if (bias) q(action_index(bias->action)) += static_cast<NetScalar>(bias->beta);
  return action_from_index(argmax_lowest(q));
}

Action greedy_action(const Agent& agent, const Observation& obs) {
  const auto& params = agent.eval_params();
  return action_from_index(argmax_lowest(forward(params, obs, zero_noise(params))));
}

std::vector<double> compute_targets(AgentKind kind, std::span<const Transition* const> batch,
                                    const NetworkParams& eval_params,
                                    const NetworkParams& target_params, double gamma,
                                    bool use_shaped_reward) {
  if (batch.empty()) throw std::invalid_argument("compute_targets: empty batch");
  Mat<NetScalar> next(kObservationDim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i)
    next.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXd>(batch[i]->next_obs.data(), kObservationDim)
            .cast<NetScalar>();

  const Mat<NetScalar> q_target = forward_batch(target_params, next, zero_noise(target_params));
  Mat<NetScalar> q_eval;
  if (kind != AgentKind::DQN) q_eval = forward_batch(eval_params, next, zero_noise(eval_params));

  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const Transition& t = *batch[i];
    const double r = use_shaped_reward ? t.reward_shaped : t.reward_env;
    if (t.done) {
      y[i] = r;
      continue;
    }
    double bootstrap = 0.0;
    if (kind == AgentKind::DQN) {
      bootstrap = static_cast<double>(q_target.col(col).maxCoeff());
    } else {
      bootstrap = static_cast<double>(q_target(argmax_lowest(q_eval.col(col)), col));
    }
    y[i] = r + gamma * bootstrap;
  }
  return y;
}

std::optional<double> train_step(Agent& agent, const ReplayBuffer& buffer, NetRng& rng) {
  const auto& cfg = agent.config();
  if (buffer.empty() || buffer.size() < static_cast<std::size_t>(cfg.warmup_transitions))
    return std::nullopt;

  const auto indices = buffer.sample_indices(static_cast<std::size_t>(cfg.batch_size), rng);
  std::vector<const Transition*> batch;
  batch.reserve(indices.size());
  for (auto i : indices) batch.push_back(&buffer.at(i));

  const auto targets = compute_targets(cfg.kind, batch, agent.eval_params(),
                                       agent.target_params(), cfg.gamma, cfg.use_shaped_reward);
  Mat<NetScalar> obs(kObservationDim, static_cast<Eigen::Index>(batch.size()));
  std::vector<int> actions(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    obs.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXd>(batch[i]->obs.data(), kObservationDim)
            .cast<NetScalar>();
    actions[i] = batch[i]->action;
  }

  const NoiseSet<NetScalar> noise = agent.uses_noise() ? sample_noise(agent.eval_params(), rng)
                                            : zero_noise(agent.eval_params());
  LossAndGradient<NetScalar>& lg = agent.scratch_;
  try {
    loss_and_gradient(agent.eval_params(), obs, actions, targets, noise, lg);
  } catch (const std::domain_error& e) {
    throw TrainingDivergence(e.what());
  }
  if (!std::isfinite(lg.loss)) throw TrainingDivergence("non-finite training loss");

  adam_step(agent.eval_params(), lg.grads, agent.adam(), cfg.lr);
  soft_update(agent.target_params(), agent.eval_params(), cfg.tau);
  return lg.loss;
}

}  // namespace lanefusion
