#pragma once

// Gradient verification utilities: flatten a tree's parameters / gradients
// into a single vector (in a fixed canonical order) and compare analytic
// gradients against central finite differences. Used by the test suite and
// handy when extending the model.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "softtree/dataset.hpp"
#include "softtree/gradients.hpp"
#include "softtree/preprocess.hpp"
#include "softtree/synth.hpp"
#include "softtree/tree.hpp"
#include "softtree/treeviz.hpp"

namespace softtree::testing {

// Canonical parameter order: inner nodes ascending (w, b, layer_w row-major,
// layer_b), then leaves ascending (phi).
inline std::vector<double*> param_ptrs(SoftTree& tree) {
  std::vector<double*> ps;
  for (auto& node : tree.inner) {
    for (auto& v : node.w) ps.push_back(&v);
    ps.push_back(&node.b);
    for (auto& v : node.layer_w.storage()) ps.push_back(&v);
    for (auto& v : node.layer_b) ps.push_back(&v);
  }
  for (auto& leaf : tree.leaves)
    for (auto& v : leaf.phi) ps.push_back(&v);
  return ps;
}

inline std::vector<double> flatten(const Gradients& grads) {
  std::vector<double> out;
  for (const auto& gi : grads.inner) {
    out.insert(out.end(), gi.w.begin(), gi.w.end());
    out.push_back(gi.b);
    const auto& lw = gi.layer_w.storage();
    out.insert(out.end(), lw.begin(), lw.end());
    out.insert(out.end(), gi.layer_b.begin(), gi.layer_b.end());
  }
  for (const auto& lp : grads.leaf_phi) out.insert(out.end(), lp.begin(), lp.end());
  return out;
}

// Relative error with a small absolute floor, so finite-difference noise on
// near-zero entries is judged on an absolute scale instead of blowing up.
inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-4});
  return std::fabs(a - b) / denom;
}

// Max relative error between grad_batch and central finite differences of
// loss_batch over every parameter. The tree is restored before returning.
inline double max_fd_rel_err(SoftTree& tree, const Matrix& x,
                             std::span<const int> y, double h = 1e-5) {
  const auto [grads, loss] = grad_batch(tree, x, y);
  (void)loss;
  const std::vector<double> analytic = flatten(grads);
  const std::vector<double*> ptrs = param_ptrs(tree);
  if (ptrs.size() != analytic.size())
    throw std::logic_error("parameter/gradient layout mismatch");

  double worst = 0.0;
  for (std::size_t k = 0; k < ptrs.size(); ++k) {
    const double save = *ptrs[k];
    *ptrs[k] = save + h;
    const double up = loss_batch(tree, x, y).total;
    *ptrs[k] = save - h;
    const double down = loss_batch(tree, x, y).total;
    *ptrs[k] = save;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[k], fd));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Golden DOT recipe: a fixed seeded tree traced over a fixed standardized
// synthetic dataset. The unit tests and the acceptance checks both regenerate
// the text through these helpers and compare it against the committed files,
// so any drift in initialization, routing, tracing, or formatting shows up.
// ---------------------------------------------------------------------------

inline Dataset golden_viz_data() {
  SynthSpec spec;
  spec.n_samples = 64;
  spec.n_features = 4;
  spec.n_informative = 2;
  spec.class_sep = 2.0;
  spec.flip_y = 0.01;
  spec.seed = 7;
  Dataset data = make_synth(spec);
  data.X = apply_standardizer(fit_standardizer(data.X), data.X);
  return data;
}

inline std::string golden_dot(std::size_t depth) {
  TreeConfig cfg;
  cfg.depth = depth;
  cfg.input_dim = 4;
  cfg.n_classes = 2;
  cfg.variant = Variant::kSdt;
  cfg.lambda = 0.1;
  cfg.seed = 40 + depth;
  SoftTree tree = init_tree(cfg);
  // Seeded leaf logits stand in for training so the rendered class
  // distributions vary, without accumulating optimizer arithmetic.
  Rng leaf_rng(90 + depth);
  for (auto& leaf : tree.leaves)
    for (auto& v : leaf.phi) v = 0.8 * leaf_rng.normal();
  const Dataset data = golden_viz_data();
  return export_dot(tree, gate_trace(tree, data.X), data.feature_names,
                    /*top_k=*/3);
}

}  // namespace softtree::testing
