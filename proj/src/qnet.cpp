#include "lanefusion/qnet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lanefusion {

namespace {

template <class S>
DenseLayer<S> make_dense(int in, int out, NetRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseLayer<S> layer;
  layer.weight.resize(out, in);
  for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      layer.weight(r, c) = static_cast<S>(dist(rng));
  layer.bias = Vec<S>::Zero(out);
  return layer;
}

template <class S>
NoisyLayer<S> make_noisy(int in, int out, NetRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  NoisyLayer<S> layer;
  layer.weight_mu.resize(out, in);
  for (Eigen::Index c = 0; c < layer.weight_mu.cols(); ++c)
    for (Eigen::Index r = 0; r < layer.weight_mu.rows(); ++r)
      layer.weight_mu(r, c) = static_cast<S>(dist(rng));
  layer.bias_mu.resize(out);
  for (Eigen::Index r = 0; r < layer.bias_mu.size(); ++r)
    layer.bias_mu(r) = static_cast<S>(dist(rng));
  const auto sigma = static_cast<S>(kNoisySigmaInit / std::sqrt(static_cast<double>(in)));
  layer.weight_sigma = Mat<S>::Constant(out, in, sigma);
  layer.bias_sigma = Vec<S>::Constant(out, sigma);
  return layer;
}

template <class S>
FactorNoise<S> draw_factor(Eigen::Index in, Eigen::Index out, NetRng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FactorNoise<S> f;
  f.eps_in.resize(in);
  f.eps_out.resize(out);
  for (Eigen::Index i = 0; i < in; ++i) f.eps_in(i) = static_cast<S>(noise_transform(normal(rng)));
  for (Eigen::Index i = 0; i < out; ++i)
    f.eps_out(i) = static_cast<S>(noise_transform(normal(rng)));
  return f;
}

bool is_zero(const auto& noise) {
  return noise.eps_in.isZero(0) && noise.eps_out.isZero(0);
}

// Intermediate values kept for the backward pass.
template <class S>
struct ForwardCache {
  Mat<S> pre1, act1, pre2, act2;
  Mat<S> value_weight, advantage_weight;
  Mat<S> q;
};

template <class S>
void noisy_head(const NoisyLayer<S>& layer, const FactorNoise<S>& noise, const Mat<S>& act,
                Mat<S>& weight, Mat<S>& out) {
  if (is_zero(noise)) {
    weight = layer.weight_mu;
    out.noalias() = layer.weight_mu * act;
    out.colwise() += layer.bias_mu;
    return;
  }
  weight = effective_weight(layer, noise);
  out.noalias() = weight * act;
  out.colwise() += effective_bias(layer, noise);
}

template <class S>
void run_forward(const Params<S>& p, const Mat<S>& x, const NoiseSet<S>& noise,
                 ForwardCache<S>& c) {
  if (x.rows() != p.input_dim())
    throw std::invalid_argument("observation dimension " + std::to_string(x.rows()) +
                                " does not match network input " + std::to_string(p.input_dim()));
  if (!x.allFinite()) throw std::domain_error("non-finite observation passed to Q-network");

  c.pre1.noalias() = p.hidden1.weight * x;
  c.pre1.colwise() += p.hidden1.bias;
  c.act1 = c.pre1.cwiseMax(S(0));
  c.pre2.noalias() = p.hidden2.weight * c.act1;
  c.pre2.colwise() += p.hidden2.bias;
  c.act2 = c.pre2.cwiseMax(S(0));

  Mat<S> value, advantage;
  noisy_head(p.value_head, noise.value_head, c.act2, c.value_weight, value);
  noisy_head(p.advantage_head, noise.advantage_head, c.act2, c.advantage_weight, advantage);

  // Dueling aggregation: Q = V + A - mean_a A.
  const RowVec<S> shift = value.row(0) - advantage.colwise().mean();
  c.q = advantage.rowwise() + shift;
}

}  // namespace

template <class S>
Params<S> init_network(int input_dim, int action_count, NetRng& rng, int hidden_width) {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (action_count < 2) throw std::invalid_argument("action_count must be >= 2");
  if (hidden_width < 1) throw std::invalid_argument("hidden_width must be >= 1");
  Params<S> p;
  p.hidden1 = make_dense<S>(input_dim, hidden_width, rng);
  p.hidden2 = make_dense<S>(hidden_width, hidden_width, rng);
  p.value_head = make_noisy<S>(hidden_width, 1, rng);
  p.advantage_head = make_noisy<S>(hidden_width, action_count, rng);
  return p;
}

double noise_transform(double x) {
  return std::copysign(std::sqrt(std::abs(x)), x);
}

template <class S>
NoiseSet<S> sample_noise(const Params<S>& params, NetRng& rng) {
  NoiseSet<S> n;
  n.value_head =
      draw_factor<S>(params.value_head.weight_mu.cols(), params.value_head.weight_mu.rows(), rng);
  n.advantage_head = draw_factor<S>(params.advantage_head.weight_mu.cols(),
                                    params.advantage_head.weight_mu.rows(), rng);
  return n;
}

template <class S>
NoiseSet<S> zero_noise(const Params<S>& params) {
  NoiseSet<S> n;
  n.value_head.eps_in = Vec<S>::Zero(params.value_head.weight_mu.cols());
  n.value_head.eps_out = Vec<S>::Zero(params.value_head.weight_mu.rows());
  n.advantage_head.eps_in = Vec<S>::Zero(params.advantage_head.weight_mu.cols());
  n.advantage_head.eps_out = Vec<S>::Zero(params.advantage_head.weight_mu.rows());
  return n;
}

template <class S>
Mat<S> effective_weight(const NoisyLayer<S>& layer, const FactorNoise<S>& noise) {
  return layer.weight_mu +
         layer.weight_sigma.cwiseProduct(noise.eps_out * noise.eps_in.transpose());
}

template <class S>
Vec<S> effective_bias(const NoisyLayer<S>& layer, const FactorNoise<S>& noise) {
  return layer.bias_mu + layer.bias_sigma.cwiseProduct(noise.eps_out);
}

template <class S>
Mat<S> forward_batch(const Params<S>& params, const Mat<S>& batch_obs, const NoiseSet<S>& noise) {
  ForwardCache<S> c;
  run_forward(params, batch_obs, noise, c);
  return std::move(c.q);
}

template <class S>
Vec<S> forward(const Params<S>& params, const Observation& obs, const NoiseSet<S>& noise) {
  const Mat<S> x =
      Eigen::Map<const Eigen::VectorXd>(obs.data(), kObservationDim).template cast<S>();
  return forward_batch(params, x, noise).col(0);
}

template <class S>
Mat<S> stack_observations(std::span<const Observation> batch) {
  Mat<S> x(kObservationDim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXd>(batch[i].data(), kObservationDim).template cast<S>();
  return x;
}

template <class S>
HuberLoss<S> huber_td_loss(const Mat<S>& q_pred, std::span<const int> actions,
                           std::span<const double> targets) {
  const auto batch = static_cast<Eigen::Index>(actions.size());
  if (targets.size() != actions.size() || q_pred.cols() != batch)
    throw std::invalid_argument("huber_td_loss: batch sizes disagree");
  HuberLoss<S> out;
  out.dloss_dq = Mat<S>::Zero(q_pred.rows(), batch);
  if (batch == 0) return out;
  const double scale = 1.0 / static_cast<double>(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= q_pred.rows()) throw std::out_of_range("huber_td_loss: action index");
    const double r = static_cast<double>(q_pred(a, i)) - targets[static_cast<std::size_t>(i)];
    const double mag = std::abs(r);
    if (mag <= 1.0) {
      out.loss += 0.5 * r * r;
      out.dloss_dq(a, i) = static_cast<S>(r * scale);
    } else {
      out.loss += mag - 0.5;
      out.dloss_dq(a, i) = static_cast<S>((r > 0.0 ? 1.0 : -1.0) * scale);
    }
  }
  out.loss *= scale;
  return out;
}

template <class S>
LossAndGradient<S> loss_and_gradient(const Params<S>& p, const Mat<S>& x,
                                     std::span<const int> actions,
                                     std::span<const double> targets, const NoiseSet<S>& noise) {
  LossAndGradient<S> out;
  loss_and_gradient(p, x, actions, targets, noise, out);
  return out;
}

template <class S>
void loss_and_gradient(const Params<S>& p, const Mat<S>& x, std::span<const int> actions,
                       std::span<const double> targets, const NoiseSet<S>& noise,
                       LossAndGradient<S>& out) {
  ForwardCache<S> c;
  run_forward(p, x, noise, c);
  if (!c.q.allFinite()) throw std::domain_error("non-finite activations in Q-network");
  HuberLoss<S> huber = huber_td_loss<S>(c.q, actions, targets);
  const Mat<S>& dq = huber.dloss_dq;

  out.loss = huber.loss;
  Gradients<S>& g = out.grads;

  const RowVec<S> d_value = dq.colwise().sum();
  const RowVec<S> d_mean = d_value / static_cast<S>(dq.rows());
  const Mat<S> d_adv = dq.rowwise() - d_mean;

  const Mat<S> d_value_weight = d_value * c.act2.transpose();
  const S d_value_bias = d_value.sum();
  Mat<S> d_adv_weight;
  d_adv_weight.noalias() = d_adv * c.act2.transpose();
  const Vec<S> d_adv_bias = d_adv.rowwise().sum();

  const auto& vn = noise.value_head;
  const auto& an = noise.advantage_head;
  g.value_head.weight_sigma = d_value_weight.cwiseProduct(vn.eps_out * vn.eps_in.transpose());
  g.value_head.weight_mu = d_value_weight;
  g.value_head.bias_mu = Vec<S>::Constant(1, d_value_bias);
  g.value_head.bias_sigma = g.value_head.bias_mu.cwiseProduct(vn.eps_out);
  g.advantage_head.weight_sigma = d_adv_weight.cwiseProduct(an.eps_out * an.eps_in.transpose());
  g.advantage_head.weight_mu = d_adv_weight;
  g.advantage_head.bias_mu = d_adv_bias;
  g.advantage_head.bias_sigma = d_adv_bias.cwiseProduct(an.eps_out);

  Mat<S> d_act2;
  d_act2.noalias() = c.value_weight.transpose() * d_value;
  d_act2.noalias() += c.advantage_weight.transpose() * d_adv;
  const Mat<S> d_pre2 = (c.pre2.array() > S(0)).select(d_act2, S(0));
  g.hidden2.weight.noalias() = d_pre2 * c.act1.transpose();
  g.hidden2.bias = d_pre2.rowwise().sum();

  Mat<S> d_act1;
  d_act1.noalias() = p.hidden2.weight.transpose() * d_pre2;
  const Mat<S> d_pre1 = (c.pre1.array() > S(0)).select(d_act1, S(0));
  g.hidden1.weight.noalias() = d_pre1 * x.transpose();
  g.hidden1.bias = d_pre1.rowwise().sum();
}

template <class S>
Gradients<S> backward(const Params<S>& params, const Mat<S>& batch_obs,
                      std::span<const int> actions, std::span<const double> targets,
                      const NoiseSet<S>& noise) {
  return loss_and_gradient(params, batch_obs, actions, targets, noise).grads;
}

template <class S>
AdamState<S> make_adam_state(const Params<S>& params) {
  AdamState<S> s;
  s.first_moment = zeros_like<Gradients<S>>(params);
  s.second_moment = zeros_like<Gradients<S>>(params);
  return s;
}

template <class S>
void adam_step(Params<S>& params, const Gradients<S>& grads, AdamState<S>& state, double lr) {
  state.timestep += 1;
  const double t = static_cast<double>(state.timestep);
  const auto step = static_cast<S>(lr / (1.0 - std::pow(state.beta1, t)));
  const auto inv_c2 = static_cast<S>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const auto b1 = static_cast<S>(state.beta1);
  const auto b2 = static_cast<S>(state.beta2);
  const auto eps = static_cast<S>(state.epsilon);
  for_each_tensor(
      [&](auto& p, const auto& g, auto& m, auto& v) {
        m.array() = b1 * m.array() + (S(1) - b1) * g.array();
        v.array() = b2 * v.array() + (S(1) - b2) * g.array().square();
        p.array() -= step * m.array() / ((v.array() * inv_c2).sqrt() + eps);
      },
      params, grads, state.first_moment, state.second_moment);
}

template <class S>
void soft_update(Params<S>& target, const Params<S>& eval, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must be in [0,1]");
  const auto a = static_cast<S>(tau);
  const auto b = static_cast<S>(1.0 - tau);
  for_each_tensor([a, b](auto& t, const auto& e) { t = a * e + b * t; }, target, eval);
}

template <class S>
bool all_finite(const Params<S>& params) {
  bool ok = true;
  for_each_tensor([&ok](const auto& t) { ok = ok && t.allFinite(); }, params);
  return ok;
}

template <class S>
std::size_t parameter_count(const Params<S>& params) {
  std::size_t n = 0;
  for_each_tensor([&n](const auto& t) { n += static_cast<std::size_t>(t.size()); }, params);
  return n;
}

#define LANEFUSION_INSTANTIATE(S)                                                               \
  template Params<S> init_network<S>(int, int, NetRng&, int);                                   \
  template NoiseSet<S> sample_noise<S>(const Params<S>&, NetRng&);                              \
  template NoiseSet<S> zero_noise<S>(const Params<S>&);                                         \
  template Mat<S> effective_weight<S>(const NoisyLayer<S>&, const FactorNoise<S>&);             \
  template Vec<S> effective_bias<S>(const NoisyLayer<S>&, const FactorNoise<S>&);               \
  template Mat<S> forward_batch<S>(const Params<S>&, const Mat<S>&, const NoiseSet<S>&);        \
  template Vec<S> forward<S>(const Params<S>&, const Observation&, const NoiseSet<S>&);          \
  template Mat<S> stack_observations<S>(std::span<const Observation>);                          \
  template HuberLoss<S> huber_td_loss<S>(const Mat<S>&, std::span<const int>,                   \
                                         std::span<const double>);                              \
  template LossAndGradient<S> loss_and_gradient<S>(const Params<S>&, const Mat<S>&,             \
                                                   std::span<const int>,                        \
                                                   std::span<const double>, const NoiseSet<S>&); \
  template void loss_and_gradient<S>(const Params<S>&, const Mat<S>&, std::span<const int>,     \
                                     std::span<const double>, const NoiseSet<S>&,               \
                                     LossAndGradient<S>&);                                      \
  template Gradients<S> backward<S>(const Params<S>&, const Mat<S>&, std::span<const int>,      \
                                    std::span<const double>, const NoiseSet<S>&);               \
  template AdamState<S> make_adam_state<S>(const Params<S>&);                                   \
  template void adam_step<S>(Params<S>&, const Gradients<S>&, AdamState<S>&, double);           \
  template void soft_update<S>(Params<S>&, const Params<S>&, double);                           \
  template bool all_finite<S>(const Params<S>&);                                                \
  template std::size_t parameter_count<S>(const Params<S>&);

LANEFUSION_INSTANTIATE(float)
LANEFUSION_INSTANTIATE(double)

#undef LANEFUSION_INSTANTIATE

}  // namespace lanefusion
