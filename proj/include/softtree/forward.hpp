#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "softtree/errors.hpp"
#include "softtree/matrix.hpp"
#include "softtree/tree.hpp"

namespace softtree {

// Numerically stable logistic, nudged to stay strictly inside (0, 1) even when
// the argument saturates in double precision.
inline double stable_sigmoid(double x) {
  double g;
  if (x >= 0.0) {
    g = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    g = e / (1.0 + e);
  }
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  if (g > hi) g = hi;
  if (g < std::numeric_limits<double>::min()) g = std::numeric_limits<double>::min();
  return g;
}

namespace detail {

inline void log_softmax(std::span<const double> logits, std::span<double> out) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

// Per-sample forward state over the whole virtual heap. Positions
// [0, n_inner) are inner nodes; positions [n_inner, n_inner + n_leaves) are
// leaves, so arrival[n_inner + l] is the path probability of leaf l.
struct GateState {
  std::vector<double> gates;    // per inner node
  std::vector<double> arrival;  // per heap position, arrival[0] == 1
  Matrix hidden;                // SM-SDT: per inner node, the node layer output

  void resize(const TreeConfig& cfg) {
    gates.assign(cfg.n_inner(), 0.0);
    arrival.assign(cfg.n_inner() + cfg.n_leaves(), 0.0);
    if (cfg.variant == Variant::kSmSdt &&
        (hidden.rows() != cfg.n_inner() || hidden.cols() != cfg.resolved_hidden()))
      hidden = Matrix(cfg.n_inner(), cfg.resolved_hidden());
  }
};

// Single root-to-leaves sweep: gates in heap order (ancestors first, so
// SM-SDT nodes can read their parent and grandparent gate values), arrivals
// pushed to both children as each node is gated. Absent ancestors are imputed
// as the uninformative gate value 0.5.
inline void forward_gates(const SoftTree& tree, std::span<const double> x,
                          GateState& st) {
  const TreeConfig& cfg = tree.config;
  const std::size_t m = cfg.n_inner();
  st.resize(cfg);
  st.arrival[0] = 1.0;

  const bool sm = cfg.variant == Variant::kSmSdt;
  const std::size_t hid = sm ? cfg.resolved_hidden() : 0;

  for (std::size_t i = 0; i < m; ++i) {
    const InnerNode& node = tree.inner[i];
    double pre = node.b;
    if (sm) {
      auto h = st.hidden.row(i);
      for (std::size_t r = 0; r < hid; ++r) {
        double acc = node.layer_b[r];
        auto wrow = node.layer_w.row(r);
        for (std::size_t c = 0; c < x.size(); ++c) acc += wrow[c] * x[c];
        h[r] = acc;
        pre += node.w[r] * acc;
      }
      const double g_parent = i > 0 ? st.gates[parent_of(i)] : 0.5;
      const double g_grand = i > 2 ? st.gates[parent_of(parent_of(i))] : 0.5;
      pre += node.w[hid] * g_parent + node.w[hid + 1] * g_grand;
    } else {
      for (std::size_t c = 0; c < x.size(); ++c) pre += node.w[c] * x[c];
    }
    const double g = stable_sigmoid(cfg.beta * pre);
    st.gates[i] = g;
    st.arrival[left_child(i)] = st.arrival[i] * (1.0 - g);
    st.arrival[right_child(i)] = st.arrival[i] * g;
  }
}

}  // namespace detail

// ============================================================================
// ForwardTrace
// ============================================================================

// Everything the routing pass produces for one input: gate probabilities
// (convention: g_i is the probability of routing RIGHT at node i, 1 - g_i
// routes left), arrival probabilities of inner nodes, per-leaf path
// probabilities, and the path-weighted mixture class distribution.
struct ForwardTrace {
  std::vector<double> gates;
  std::vector<double> arrival;
  std::vector<double> path_probs;
  std::vector<double> mixture;
};

// Leaf class distributions softmax(phi), one row per leaf.
inline Matrix leaf_distributions(const SoftTree& tree) {
  const std::size_t L = tree.config.n_leaves();
  const std::size_t C = tree.config.n_classes;
  Matrix q(L, C);
  std::vector<double> logq(C);
  for (std::size_t l = 0; l < L; ++l) {
    detail::log_softmax(tree.leaves[l].phi, logq);
    for (std::size_t c = 0; c < C; ++c) q(l, c) = std::exp(logq[c]);
  }
  return q;
}

inline Matrix leaf_log_distributions(const SoftTree& tree) {
  const std::size_t L = tree.config.n_leaves();
  const std::size_t C = tree.config.n_classes;
  Matrix logq(L, C);
  for (std::size_t l = 0; l < L; ++l)
    detail::log_softmax(tree.leaves[l].phi, logq.row(l));
  return logq;
}

inline ForwardTrace forward(const SoftTree& tree, std::span<const double> x) {
  if (x.size() != tree.config.input_dim)
    throw InputError("forward: input has length " + std::to_string(x.size()) +
                     ", expected " + std::to_string(tree.config.input_dim));
  if (!all_finite(x)) throw InputError("forward: input contains non-finite values");

  detail::GateState st;
  detail::forward_gates(tree, x, st);

  const std::size_t m = tree.config.n_inner();
  const std::size_t L = tree.config.n_leaves();
  const std::size_t C = tree.config.n_classes;

  ForwardTrace tr;
  tr.gates = st.gates;
  tr.arrival.assign(st.arrival.begin(), st.arrival.begin() + m);
  tr.path_probs.assign(st.arrival.begin() + m, st.arrival.end());
  tr.mixture.assign(C, 0.0);
  const Matrix q = leaf_distributions(tree);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t c = 0; c < C; ++c) tr.mixture[c] += tr.path_probs[l] * q(l, c);
  return tr;
}

// ============================================================================
// Batch prediction
// ============================================================================

struct PredictResult {
  Matrix proba;                       // n x C mixture distributions
  std::vector<std::size_t> hard_leaf; // argmax-path leaf, ties to lowest index
};

// Positive-class score for AUC is proba(r, 1).
inline PredictResult predict_batch(const SoftTree& tree, const Matrix& X) {
  if (X.rows() > 0 && X.cols() != tree.config.input_dim)
    throw InputError("predict_batch: X has " + std::to_string(X.cols()) +
                     " columns, expected " + std::to_string(tree.config.input_dim));
  if (!X.all_finite()) throw InputError("predict_batch: X contains non-finite values");

  const std::size_t n = X.rows();
  const std::size_t m = tree.config.n_inner();
  const std::size_t L = tree.config.n_leaves();
  const std::size_t C = tree.config.n_classes;

  PredictResult res;
  res.proba = Matrix(n, C);
  res.hard_leaf.assign(n, 0);

  const Matrix q = leaf_distributions(tree);
  detail::GateState st;
  for (std::size_t r = 0; r < n; ++r) {
    detail::forward_gates(tree, X.row(r), st);
    auto out = res.proba.row(r);
    std::size_t best = 0;
    for (std::size_t l = 0; l < L; ++l) {
      const double p = st.arrival[m + l];
      if (p > st.arrival[m + best]) best = l;
      for (std::size_t c = 0; c < C; ++c) out[c] += p * q(l, c);
    }
    res.hard_leaf[r] = best;
  }
  return res;
}

}  // namespace softtree
