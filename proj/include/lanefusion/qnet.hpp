#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <span>

#include "lanefusion/traffic_sim.hpp"

namespace lanefusion {

using NetRng = std::mt19937_64;

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
struct DenseLayer {
  Mat<S> weight;  // out x in
  Vec<S> bias;
};

/// Factorized-noise linear layer: effective weight is
/// weight_mu + weight_sigma .* (eps_out * eps_in^T), effective bias is
/// bias_mu + bias_sigma .* eps_out.
template <class S>
struct NoisyLayer {
  Mat<S> weight_mu;
  Mat<S> weight_sigma;
  Vec<S> bias_mu;
  Vec<S> bias_sigma;
};

/// Dueling Q-network: two ReLU hidden layers feeding a noisy value head
/// (width 1) and a noisy advantage head (width action_count). The same
/// shape tree is reused for gradients and optimizer moments, so the tag
/// only keeps those roles from being mixed up.
template <class S, class Tag>
struct ParamTree {
  using Scalar = S;
  DenseLayer<S> hidden1;
  DenseLayer<S> hidden2;
  NoisyLayer<S> value_head;
  NoisyLayer<S> advantage_head;

  int input_dim() const { return static_cast<int>(hidden1.weight.cols()); }
  int hidden_width() const { return static_cast<int>(hidden1.weight.rows()); }
  int action_count() const { return static_cast<int>(advantage_head.weight_mu.rows()); }
};

struct ParamsTag {};
struct GradientTag {};
template <class S>
using Params = ParamTree<S, ParamsTag>;
template <class S>
using Gradients = ParamTree<S, GradientTag>;

// Agents train in single precision; the double instantiation exists for
// gradient checking against finite differences.
using NetScalar = float;
using NetworkParams = Params<NetScalar>;
using GradientSet = Gradients<NetScalar>;

/// Visits the twelve tensors of one or more congruent trees in a fixed order.
template <class F, class... Trees>
void for_each_tensor(F&& f, Trees&&... trees) {
  f(trees.hidden1.weight...);
  f(trees.hidden1.bias...);
  f(trees.hidden2.weight...);
  f(trees.hidden2.bias...);
  f(trees.value_head.weight_mu...);
  f(trees.value_head.weight_sigma...);
  f(trees.value_head.bias_mu...);
  f(trees.value_head.bias_sigma...);
  f(trees.advantage_head.weight_mu...);
  f(trees.advantage_head.weight_sigma...);
  f(trees.advantage_head.bias_mu...);
  f(trees.advantage_head.bias_sigma...);
}

inline constexpr std::array<const char*, 12> kTensorNames = {
    "hidden1.weight",         "hidden1.bias",
    "hidden2.weight",         "hidden2.bias",
    "value_head.weight_mu",   "value_head.weight_sigma",
    "value_head.bias_mu",     "value_head.bias_sigma",
    "advantage_head.weight_mu", "advantage_head.weight_sigma",
    "advantage_head.bias_mu", "advantage_head.bias_sigma"};

template <class S>
struct FactorNoise {
  Vec<S> eps_in;
  Vec<S> eps_out;
};

template <class S>
struct NoiseSet {
  FactorNoise<S> value_head;
  FactorNoise<S> advantage_head;
};

template <class S>
struct AdamState {
  Gradients<S> first_moment;
  Gradients<S> second_moment;
  std::int64_t timestep = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline constexpr int kDefaultHiddenWidth = 256;
inline constexpr double kNoisySigmaInit = 0.5;

/// Draws are made in double and rounded, so both precisions built from the
/// same rng state hold the same values up to rounding.
template <class S = NetScalar>
Params<S> init_network(int input_dim, int action_count, NetRng& rng,
                       int hidden_width = kDefaultHiddenWidth);

/// Zero-filled tree with the same shapes as `like`.
template <class Out, class In>
Out zeros_like(const In& like) {
  Out out;
  for_each_tensor([](auto& dst, const auto& src) { dst.setZero(src.rows(), src.cols()); }, out,
                  like);
  return out;
}

/// Element-wise precision conversion of a whole tree.
template <class To, class Tag, class From>
ParamTree<To, Tag> cast_tree(const ParamTree<From, Tag>& in) {
  ParamTree<To, Tag> out;
  for_each_tensor([](auto& dst, const auto& src) { dst = src.template cast<To>(); }, out, in);
  return out;
}

/// f(x) = sign(x) * sqrt(|x|).
double noise_transform(double x);

template <class S>
NoiseSet<S> sample_noise(const Params<S>& params, NetRng& rng);
template <class S>
NoiseSet<S> zero_noise(const Params<S>& params);

template <class S>
Mat<S> effective_weight(const NoisyLayer<S>& layer, const FactorNoise<S>& noise);
template <class S>
Vec<S> effective_bias(const NoisyLayer<S>& layer, const FactorNoise<S>& noise);

/// Q-values for a batch laid out one observation per column; result is
/// action_count x batch. Throws std::domain_error on non-finite input.
template <class S>
Mat<S> forward_batch(const Params<S>& params, const Mat<S>& batch_obs, const NoiseSet<S>& noise);
template <class S>
Vec<S> forward(const Params<S>& params, const Observation& obs, const NoiseSet<S>& noise);

/// Packs observations column-wise for forward_batch.
template <class S = NetScalar>
Mat<S> stack_observations(std::span<const Observation> batch);

template <class S>
struct HuberLoss {
  double loss = 0.0;
  Mat<S> dloss_dq;  // action_count x batch, nonzero only at taken actions
};

/// Mean Huber (kappa = 1) loss of q_pred(a_i, i) - target_i.
template <class S>
HuberLoss<S> huber_td_loss(const Mat<S>& q_pred, std::span<const int> actions,
                           std::span<const double> targets);

template <class S>
struct LossAndGradient {
  double loss = 0.0;
  Gradients<S> grads;
};

template <class S>
LossAndGradient<S> loss_and_gradient(const Params<S>& params, const Mat<S>& batch_obs,
                                     std::span<const int> actions,
                                     std::span<const double> targets, const NoiseSet<S>& noise);
/// Same, writing into `out` so its gradient storage is reused across calls.
template <class S>
void loss_and_gradient(const Params<S>& params, const Mat<S>& batch_obs,
                       std::span<const int> actions, std::span<const double> targets,
                       const NoiseSet<S>& noise, LossAndGradient<S>& out);
template <class S>
Gradients<S> backward(const Params<S>& params, const Mat<S>& batch_obs,
                      std::span<const int> actions, std::span<const double> targets,
                      const NoiseSet<S>& noise);

template <class S>
AdamState<S> make_adam_state(const Params<S>& params);
template <class S>
void adam_step(Params<S>& params, const Gradients<S>& grads, AdamState<S>& state, double lr);

/// target <- tau * eval + (1 - tau) * target, parameter-wise.
template <class S>
void soft_update(Params<S>& target, const Params<S>& eval, double tau);

template <class S>
bool all_finite(const Params<S>& params);
template <class S>
std::size_t parameter_count(const Params<S>& params);

}  // namespace lanefusion
