#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "softtree/errors.hpp"
#include "softtree/forward.hpp"
#include "softtree/matrix.hpp"
#include "softtree/tree.hpp"

namespace softtree {

struct LossValue {
  double total = 0.0;
  double data_term = 0.0;
  double penalty_term = 0.0;
};

// Mirror of a SoftTree's trainable parameters, holding d(loss)/d(parameter).
struct GradInner {
  std::vector<double> w;
  double b = 0.0;
  Matrix layer_w;
  std::vector<double> layer_b;
};

struct Gradients {
  std::vector<GradInner> inner;
  std::vector<std::vector<double>> leaf_phi;

  static Gradients zeros_like(const SoftTree& tree) {
    Gradients g;
    g.inner.resize(tree.inner.size());
    for (std::size_t i = 0; i < tree.inner.size(); ++i) {
      const InnerNode& node = tree.inner[i];
      g.inner[i].w.assign(node.w.size(), 0.0);
      g.inner[i].b = 0.0;
      if (node.layer_w.rows() > 0) {
        g.inner[i].layer_w = Matrix(node.layer_w.rows(), node.layer_w.cols());
        g.inner[i].layer_b.assign(node.layer_b.size(), 0.0);
      }
    }
    g.leaf_phi.resize(tree.leaves.size());
    for (std::size_t l = 0; l < tree.leaves.size(); ++l)
      g.leaf_phi[l].assign(tree.leaves[l].phi.size(), 0.0);
    return g;
  }

  bool all_finite() const {
    for (const auto& gi : inner) {
      if (!softtree::all_finite(gi.w) || !std::isfinite(gi.b)) return false;
      if (!gi.layer_w.all_finite() || !softtree::all_finite(gi.layer_b)) return false;
    }
    for (const auto& lp : leaf_phi)
      if (!softtree::all_finite(lp)) return false;
    return true;
  }
};

namespace detail {

constexpr double kAlphaClamp = 1e-6;

inline void validate_batch(const SoftTree& tree, const Matrix& X,
                           std::span<const int> y) {
  if (X.rows() == 0) throw InputError("empty batch");
  if (X.cols() != tree.config.input_dim)
    throw InputError("batch has " + std::to_string(X.cols()) +
                     " columns, expected " + std::to_string(tree.config.input_dim));
  if (y.size() != X.rows()) throw InputError("label count does not match batch size");
  if (!X.all_finite()) throw InputError("batch contains non-finite values");
  const int C = static_cast<int>(tree.config.n_classes);
  for (int label : y)
    if (label < 0 || label >= C)
      throw InputError("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(C) + ")");
}

// Gate-balance penalty: -lambda * sum_i 2^-depth(i) * 0.5*(log a_i + log(1-a_i))
// with a_i the arrival-weighted batch-average gate of node i, clamped away
// from the log singularities.
inline double penalty_from_alpha(const TreeConfig& cfg,
                                 std::span<const double> alpha) {
  double pen = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double decay = std::ldexp(1.0, -static_cast<int>(node_depth(i)));
    pen += decay * 0.5 * (std::log(alpha[i]) + std::log1p(-alpha[i]));
  }
  return -cfg.lambda * pen;
}

}  // namespace detail

// ============================================================================
// Loss
// ============================================================================

// data_term: mean over the batch of the expected per-leaf cross-entropy
//   -sum_l P_l(x) log Q_l[y],  Q_l = softmax(phi_l).
// penalty_term: gate-balance regularizer with 2^-depth decay and batch-local
// alpha (see penalty_from_alpha). alpha_out, when given, receives the clamped
// per-node alpha values (used for training history).
inline LossValue loss_batch(const SoftTree& tree, const Matrix& X,
                            std::span<const int> y,
                            std::vector<double>* alpha_out = nullptr) {
  detail::validate_batch(tree, X, y);
  const std::size_t n = X.rows();
  const std::size_t m = tree.config.n_inner();
  const std::size_t L = tree.config.n_leaves();

  const Matrix logq = leaf_log_distributions(tree);

  double data = 0.0;
  std::vector<double> num(m, 0.0), den(m, 0.0);
  detail::GateState st;
  for (std::size_t s = 0; s < n; ++s) {
    detail::forward_gates(tree, X.row(s), st);
    const int label = y[s];
    for (std::size_t l = 0; l < L; ++l)
      data -= st.arrival[m + l] * logq(l, static_cast<std::size_t>(label));
    for (std::size_t i = 0; i < m; ++i) {
      num[i] += st.arrival[i] * st.gates[i];
      den[i] += st.arrival[i];
    }
  }
  data /= static_cast<double>(n);

  std::vector<double> alpha(m, 0.5);
  for (std::size_t i = 0; i < m; ++i)
    if (den[i] > 0.0)
      alpha[i] = std::clamp(num[i] / den[i], detail::kAlphaClamp,
                            1.0 - detail::kAlphaClamp);
  if (alpha_out) *alpha_out = alpha;

  LossValue loss;
  loss.data_term = data;
  loss.penalty_term = detail::penalty_from_alpha(tree.config, alpha);
  loss.total = loss.data_term + loss.penalty_term;
  return loss;
}

// ============================================================================
// Gradients
// ============================================================================

// Exact gradient of loss_batch's total, by reverse accumulation through the
// routing tree. Per-sample quantities flow backwards in two sweeps:
//   1. arrival adjoints, from leaf path probabilities (data term) and the
//      penalty's alpha ratios, pushed root-wards through the gating products;
//   2. gate adjoints through each gate's pre-activation into its parameters
//      and, for SM-SDT, into the ancestor gate values the node consumed.
// Summation order over samples is fixed, so results are bit-reproducible.
inline std::pair<Gradients, LossValue> grad_batch(const SoftTree& tree,
                                                  const Matrix& X,
                                                  std::span<const int> y) {
  detail::validate_batch(tree, X, y);
  const TreeConfig& cfg = tree.config;
  const std::size_t n = X.rows();
  const std::size_t m = cfg.n_inner();
  const std::size_t L = cfg.n_leaves();
  const std::size_t C = cfg.n_classes;
  const std::size_t P = m + L;  // heap positions including virtual leaf slots
  const bool sm = cfg.variant == Variant::kSmSdt;
  const std::size_t hid = sm ? cfg.resolved_hidden() : 0;
  const double inv_n = 1.0 / static_cast<double>(n);

  const Matrix logq = leaf_log_distributions(tree);
  const Matrix q = leaf_distributions(tree);

  Gradients grads = Gradients::zeros_like(tree);

  // ---- forward sweep, caching per-sample state -----------------------------
  Matrix gates_all(n, m);
  Matrix arrival_all(n, P);
  Matrix hidden_all = sm ? Matrix(n, m * hid) : Matrix();

  double data = 0.0;
  std::vector<double> num(m, 0.0), den(m, 0.0);
  detail::GateState st;
  for (std::size_t s = 0; s < n; ++s) {
    detail::forward_gates(tree, X.row(s), st);
    for (std::size_t i = 0; i < m; ++i) gates_all(s, i) = st.gates[i];
    for (std::size_t k = 0; k < P; ++k) arrival_all(s, k) = st.arrival[k];
    if (sm)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < hid; ++r)
          hidden_all(s, i * hid + r) = st.hidden(i, r);

    const auto label = static_cast<std::size_t>(y[s]);
    for (std::size_t l = 0; l < L; ++l) {
      const double pl = st.arrival[m + l];
      data -= pl * logq(l, label);
      for (std::size_t c = 0; c < C; ++c)
        grads.leaf_phi[l][c] += inv_n * pl * (q(l, c) - (c == label ? 1.0 : 0.0));
    }
    for (std::size_t i = 0; i < m; ++i) {
      num[i] += st.arrival[i] * st.gates[i];
      den[i] += st.arrival[i];
    }
  }
  data *= inv_n;

  // ---- penalty and the adjoints of its batch-level ratios ------------------
  std::vector<double> alpha(m, 0.5), nbar(m, 0.0), dbar(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (den[i] <= 0.0) continue;
    const double raw = num[i] / den[i];
    alpha[i] = std::clamp(raw, detail::kAlphaClamp, 1.0 - detail::kAlphaClamp);
    if (raw > detail::kAlphaClamp && raw < 1.0 - detail::kAlphaClamp) {
      const double decay = std::ldexp(1.0, -static_cast<int>(node_depth(i)));
      const double abar =
          -cfg.lambda * decay * 0.5 * (1.0 / alpha[i] - 1.0 / (1.0 - alpha[i]));
      nbar[i] = abar / den[i];
      dbar[i] = -abar * alpha[i] / den[i];
    }
  }

  LossValue loss;
  loss.data_term = data;
  loss.penalty_term = detail::penalty_from_alpha(cfg, alpha);
  loss.total = loss.data_term + loss.penalty_term;

  // ---- backward sweep -------------------------------------------------------
  std::vector<double> abar(P), gbar(m);
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = X.row(s);
    const auto label = static_cast<std::size_t>(y[s]);

    for (std::size_t l = 0; l < L; ++l) abar[m + l] = -inv_n * logq(l, label);
    for (std::size_t i = 0; i < m; ++i) {
      abar[i] = nbar[i] * gates_all(s, i) + dbar[i];
      gbar[i] = nbar[i] * arrival_all(s, i);
    }

    // Arrival adjoints climb the heap; children sit at higher indices, so a
    // single descending pass finalizes each position before it is consumed.
    for (std::size_t k = P - 1; k >= 1; --k) {
      const std::size_t p = parent_of(k);
      const bool right = k == right_child(p);
      const double g = gates_all(s, p);
      abar[p] += abar[k] * (right ? g : 1.0 - g);
      gbar[p] += (right ? 1.0 : -1.0) * abar[k] * arrival_all(s, p);
    }

    // Gate adjoints into parameters, deepest node first: SM-SDT descendants
    // add to their ancestors' gate adjoints, which sit at lower indices.
    for (std::size_t ii = m; ii-- > 0;) {
      const double g = gates_all(s, ii);
      const double prebar = gbar[ii] * cfg.beta * g * (1.0 - g);
      GradInner& gi = grads.inner[ii];
      gi.b += prebar;
      if (!sm) {
        for (std::size_t c = 0; c < x.size(); ++c) gi.w[c] += prebar * x[c];
      } else {
        const InnerNode& node = tree.inner[ii];
        const double g_parent = ii > 0 ? gates_all(s, parent_of(ii)) : 0.5;
        const double g_grand = ii > 2 ? gates_all(s, parent_of(parent_of(ii))) : 0.5;
        for (std::size_t r = 0; r < hid; ++r) {
          const double h = hidden_all(s, ii * hid + r);
          gi.w[r] += prebar * h;
          const double hbar = prebar * node.w[r];
          gi.layer_b[r] += hbar;
          auto lw = gi.layer_w.row(r);
          for (std::size_t c = 0; c < x.size(); ++c) lw[c] += hbar * x[c];
        }
        gi.w[hid] += prebar * g_parent;
        gi.w[hid + 1] += prebar * g_grand;
        if (ii > 0) gbar[parent_of(ii)] += prebar * node.w[hid];
        if (ii > 2) gbar[parent_of(parent_of(ii))] += prebar * node.w[hid + 1];
      }
    }
  }

  return {std::move(grads), loss};
}

}  // namespace softtree
