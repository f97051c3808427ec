#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lanefusion/qnet.hpp"

namespace lanefusion::testing {

struct GradCheckCase {
  Params<double> params;
  Mat<double> obs;
  std::vector<int> actions;
  std::vector<double> targets;
  NoiseSet<double> noise;
};

// Smallest distance of any ReLU pre-activation from zero and of any TD
// residual from the Huber knee. Central differences are meaningless when a
// perturbation of size h can cross one of those kinks.
inline double kink_distance(const GradCheckCase& c) {
  const auto& p = c.params;
  const Mat<double> z1 = (p.hidden1.weight * c.obs).colwise() + p.hidden1.bias;
  const Mat<double> z2 = (p.hidden2.weight * z1.cwiseMax(0.0)).colwise() + p.hidden2.bias;
  double d = std::min(z1.cwiseAbs().minCoeff(), z2.cwiseAbs().minCoeff());
  const Mat<double> q = forward_batch(p, c.obs, c.noise);
  for (std::size_t i = 0; i < c.actions.size(); ++i)
    d = std::min(d, std::abs(std::abs(q(c.actions[i], static_cast<Eigen::Index>(i)) - c.targets[i]) - 1.0));
  return d;
}

// Random network, batch and noise draw. Targets straddle the predictions
// so both Huber branches are exercised. Draws that sit closer than
// `min_kink` to a kink are rejected and redrawn from the same stream.
inline GradCheckCase make_grad_case(int hidden, int batch, std::uint64_t seed,
                                    double min_kink = 3e-4) {
  NetRng rng(seed);
  for (;;) {
    GradCheckCase c;
    c.params = init_network<double>(kObservationDim, kActionCount, rng, hidden);
    // Spread the sigmas so their gradients are not all alike, and move the
    // hidden biases off zero so dead units do not pin pre-activations at 0.
    std::uniform_real_distribution<double> unit(0.5, 1.5);
    for (auto* layer : {&c.params.value_head, &c.params.advantage_head}) {
      layer->weight_sigma = layer->weight_sigma.unaryExpr([&](double s) { return s * unit(rng); });
      layer->bias_sigma = layer->bias_sigma.unaryExpr([&](double s) { return s * unit(rng); });
    }
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    for (auto* layer : {&c.params.hidden1, &c.params.hidden2})
      layer->bias = layer->bias.unaryExpr([&](double) { return small(rng); });
    std::uniform_real_distribution<double> feature(-1.0, 1.0);
    c.obs.resize(kObservationDim, batch);
    for (Eigen::Index i = 0; i < c.obs.size(); ++i) c.obs(i) = feature(rng);
    c.noise = sample_noise(c.params, rng);
    const Mat<double> q = forward_batch(c.params, c.obs, c.noise);
    std::uniform_int_distribution<int> pick(0, kActionCount - 1);
    std::uniform_real_distribution<double> offset(-3.0, 3.0);
    for (int i = 0; i < batch; ++i) {
      c.actions.push_back(pick(rng));
      c.targets.push_back(q(c.actions.back(), i) + offset(rng));
    }
    if (kink_distance(c) >= min_kink) return c;
  }
}

inline double case_loss(const GradCheckCase& c, const Params<double>& p) {
  return huber_td_loss<double>(forward_batch(p, c.obs, c.noise), c.actions, c.targets).loss;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences against the analytic gradient. `per_tensor` caps
// how many entries of each tensor are probed (0 = all).
inline GradCheckResult check_gradients(const GradCheckCase& c, double h = 1e-4,
                                       std::size_t per_tensor = 0, std::uint64_t seed = 1) {
  const auto analytic = backward(c.params, c.obs, c.actions, c.targets, c.noise);
  Params<double> probe = c.params;
  GradCheckResult out;
  std::mt19937_64 rng(seed);
  for_each_tensor(
      [&](auto& param, const auto& grad) {
        const auto n = static_cast<std::size_t>(param.size());
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        if (per_tensor > 0 && per_tensor < n) {
          std::shuffle(idx.begin(), idx.end(), rng);
          idx.resize(per_tensor);
        }
        for (std::size_t k : idx) {
          double& x = param.data()[k];
          const double saved = x;
          x = saved + h;
          const double up = case_loss(c, probe);
          x = saved - h;
          const double down = case_loss(c, probe);
          x = saved;
          const double numeric = (up - down) / (2.0 * h);
          const double a = grad.data()[k];
          const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
          out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
          ++out.checked;
        }
      },
      probe, analytic);
  return out;
}

}  // namespace lanefusion::testing
