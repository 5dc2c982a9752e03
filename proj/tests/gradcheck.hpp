#pragma once

#include <algorithm>
#include <cmath>

#include "ddat/network.hpp"
#include "ddat/training.hpp"
#include "helpers.hpp"

namespace testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t compared = 0;  // entries above the magnitude floor
};

// Analytic (BPTT) against central-difference gradients of the joint loss
// on one random sequence.
inline GradCheck check_gradients(ddat::AuxHead head, const ddat::MtlWeights& weights, int units = 8,
                                 int frames = 5, int input_dim = 3, int layers = 1, std::uint64_t seed = 1,
                                 ddat::PuLoss pu = ddat::PuLoss::absolute, double step = 1e-4) {
  ddat::NetworkConfig cfg;
  cfg.num_layers = layers;
  cfg.units_per_layer = units;
  cfg.input_dim = input_dim;
  cfg.aux_head = head;
  cfg.reconstruction_dim = input_dim;
  cfg.seed = seed;
  auto net = ddat::init_network(cfg);
  std::mt19937_64 rng(seed + 100);
  // Non-zero biases so every parameter block gets exercised.
  net.parameters() += random_vector(rng, net.parameters().size(), 0.1);
  const Eigen::MatrixXd x = random_matrix(rng, frames, input_dim);
  const Eigen::VectorXd y = random_vector(rng, frames, 0.5);
  const Eigen::VectorXd u = random_vector(rng, frames, 0.3).cwiseAbs();

  auto loss_at = [&](const Eigen::VectorXd& theta) {
    ddat::GruNetwork probe = net;
    probe.parameters() = theta;
    const auto b = ddat::forward(probe, x, false);
    return ddat::joint_loss(b, y, x, u, weights, head, pu).total + ddat::regularization(probe, weights);
  };
  const auto bundle = ddat::forward(net, x);
  const auto terms = ddat::joint_loss(bundle, y, x, u, weights, head, pu);
  Eigen::VectorXd analytic = ddat::backward(net, bundle, terms.grads);
  ddat::add_regularization_gradient(net, weights, analytic);
  const Eigen::VectorXd numeric = ddat::numeric_gradient(loss_at, net.parameters(), step);

  GradCheck out;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic(i), n = numeric(i);
    const double mag = std::max(std::abs(a), std::abs(n));
    if (mag <= 1e-6) continue;
    out.max_rel_error = std::max(out.max_rel_error, std::abs(a - n) / mag);
    ++out.compared;
  }
  return out;
}

}  // namespace testing
