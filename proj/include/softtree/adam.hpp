#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>

#include "softtree/errors.hpp"
#include "softtree/gradients.hpp"
#include "softtree/tree.hpp"

namespace softtree {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;  // may exceed n; then one batch per epoch
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t shuffle_seed = 0;   // dedicated stream for epoch permutations
  std::size_t history_every = 1;    // record cadence, in epochs
  double val_fraction = 0.0;        // > 0 carves out a validation set for AUC tracking
  bool record_snapshots = false;    // store full parameters in each history record

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate must be positive and finite");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0))
      throw ConfigError("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw ConfigError("adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (history_every < 1) throw ConfigError("history_every must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw ConfigError("val_fraction must lie in [0, 1)");
  }
};

// First/second moment accumulators, shaped exactly like the gradients.
struct AdamState {
  Gradients m;
  Gradients v;
  std::uint64_t t = 0;

  static AdamState init(const SoftTree& tree) {
    AdamState s;
    s.m = Gradients::zeros_like(tree);
    s.v = Gradients::zeros_like(tree);
    return s;
  }
};

namespace detail {

// Scalar bias-corrected Adam update. bc1/bc2 are 1 - beta^t for the current
// step count.
inline void adam_update(double& p, double& m, double& v, double g,
                        const TrainConfig& cfg, double bc1, double bc2) {
  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
  v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
  const double mhat = m / bc1;
  const double vhat = v / bc2;
  p -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
}

}  // namespace detail

// One Adam step over every tree parameter, in a fixed visitation order
// (inner nodes ascending: w, b, layer_w, layer_b; then leaves).
inline void adam_step(SoftTree& tree, const Gradients& grads, AdamState& state,
                      const TrainConfig& cfg) {
  if (grads.inner.size() != tree.inner.size() ||
      grads.leaf_phi.size() != tree.leaves.size() ||
      state.m.inner.size() != tree.inner.size())
    throw std::logic_error("adam_step: state/gradient shape mismatch");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));

  for (std::size_t i = 0; i < tree.inner.size(); ++i) {
    InnerNode& node = tree.inner[i];
    const GradInner& g = grads.inner[i];
    GradInner& m = state.m.inner[i];
    GradInner& v = state.v.inner[i];
    if (g.w.size() != node.w.size() ||
        g.layer_w.storage().size() != node.layer_w.storage().size())
      throw std::logic_error("adam_step: inner node shape mismatch");

    for (std::size_t k = 0; k < node.w.size(); ++k)
      detail::adam_update(node.w[k], m.w[k], v.w[k], g.w[k], cfg, bc1, bc2);
    detail::adam_update(node.b, m.b, v.b, g.b, cfg, bc1, bc2);
    for (std::size_t k = 0; k < node.layer_w.storage().size(); ++k)
      detail::adam_update(node.layer_w.storage()[k], m.layer_w.storage()[k],
                          v.layer_w.storage()[k], g.layer_w.storage()[k], cfg,
                          bc1, bc2);
    for (std::size_t k = 0; k < node.layer_b.size(); ++k)
      detail::adam_update(node.layer_b[k], m.layer_b[k], v.layer_b[k],
                          g.layer_b[k], cfg, bc1, bc2);
  }
  for (std::size_t l = 0; l < tree.leaves.size(); ++l) {
    if (grads.leaf_phi[l].size() != tree.leaves[l].phi.size())
      throw std::logic_error("adam_step: leaf shape mismatch");
    for (std::size_t c = 0; c < tree.leaves[l].phi.size(); ++c)
      detail::adam_update(tree.leaves[l].phi[c], state.m.leaf_phi[l][c],
                          state.v.leaf_phi[l][c], grads.leaf_phi[l][c], cfg, bc1,
                          bc2);
  }
}

}  // namespace softtree
