#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "softtree/errors.hpp"
#include "softtree/matrix.hpp"
#include "softtree/rng.hpp"

namespace softtree {

enum class Variant { kSdt, kSmSdt };

inline std::string variant_name(Variant v) {
  return v == Variant::kSdt ? "SDT" : "SMSDT";
}

// ============================================================================
// Heap indexing
// ============================================================================
// Inner nodes are stored in heap order: node i has children 2i+1 (left) and
// 2i+2 (right). A tree of depth D has 2^D - 1 inner nodes; leaf l occupies
// virtual heap position (2^D - 1) + l.

inline std::size_t parent_of(std::size_t i) { return (i - 1) / 2; }
inline std::size_t left_child(std::size_t i) { return 2 * i + 1; }
inline std::size_t right_child(std::size_t i) { return 2 * i + 2; }
inline std::size_t node_depth(std::size_t i) {
  return static_cast<std::size_t>(std::bit_width(i + 1)) - 1;
}

// ============================================================================
// Configuration
// ============================================================================

struct TreeConfig {
  std::size_t depth = 3;      // number of gating levels
  std::size_t input_dim = 0;
  std::size_t n_classes = 2;
  Variant variant = Variant::kSdt;
  std::size_t hidden_dim = 0;  // SM-SDT node layer width; 0 means min(input_dim, 32)
  double beta = 1.0;           // inverse temperature on the gate sigmoid
  double lambda = 0.1;         // gate-balance penalty weight
  std::uint64_t seed = 0;

  std::size_t n_inner() const { return (std::size_t{1} << depth) - 1; }
  std::size_t n_leaves() const { return std::size_t{1} << depth; }

  std::size_t resolved_hidden() const {
    return hidden_dim != 0 ? hidden_dim : std::min<std::size_t>(input_dim, 32);
  }

  // Length of the gate weight vector: d for SDT, H+2 for SM-SDT (the hidden
  // vector plus the parent and grandparent gate values).
  std::size_t gate_dim() const {
    return variant == Variant::kSmSdt ? resolved_hidden() + 2 : input_dim;
  }

  void validate() const {
    if (depth < 1) throw ConfigError("tree depth must be >= 1");
    if (depth > 24) throw ConfigError("tree depth > 24 is not supported");
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw ConfigError("beta must be positive and finite");
    if (lambda < 0.0 || !std::isfinite(lambda))
      throw ConfigError("lambda must be non-negative and finite");
  }
};

// ============================================================================
// Model
// ============================================================================

struct InnerNode {
  // Gate weight. Length input_dim for SDT; length hidden_dim + 2 for SM-SDT,
  // laid out as [h_0 .. h_{H-1}, parent gate, grandparent gate].
  std::vector<double> w;
  double b = 0.0;
  // SM-SDT per-node input layer (hidden_dim x input_dim); empty for SDT.
  Matrix layer_w;
  std::vector<double> layer_b;
};

struct LeafNode {
  std::vector<double> phi;  // class logits
};

struct SoftTree {
  TreeConfig config;
  std::vector<InnerNode> inner;   // size 2^depth - 1, heap order
  std::vector<LeafNode> leaves;   // size 2^depth
};

// Fresh tree with gate and layer weights ~ Normal(0, 1/fan_in), zero biases
// and zero leaf logits, so initial gates sit near 0.5 and the initial data
// loss is exactly ln(n_classes). Deterministic given config.seed.
inline SoftTree init_tree(const TreeConfig& config) {
  config.validate();
  SoftTree tree;
  tree.config = config;
  if (config.variant == Variant::kSmSdt)
    tree.config.hidden_dim = config.resolved_hidden();

  const std::size_t d = config.input_dim;
  const std::size_t gate_dim = tree.config.gate_dim();
  const std::size_t hidden = tree.config.resolved_hidden();

  Rng rng(config.seed);
  tree.inner.resize(config.n_inner());
  for (auto& node : tree.inner) {
    if (config.variant == Variant::kSmSdt) {
      node.layer_w = Matrix(hidden, d);
      const double sd = 1.0 / std::sqrt(static_cast<double>(d));
      for (std::size_t r = 0; r < hidden; ++r)
        for (std::size_t c = 0; c < d; ++c) node.layer_w(r, c) = rng.normal(0.0, sd);
      node.layer_b.assign(hidden, 0.0);
    }
    node.w.resize(gate_dim);
    const double sd = 1.0 / std::sqrt(static_cast<double>(gate_dim));
    for (auto& x : node.w) x = rng.normal(0.0, sd);
    node.b = 0.0;
  }

  tree.leaves.resize(config.n_leaves());
  for (auto& leaf : tree.leaves) leaf.phi.assign(config.n_classes, 0.0);
  return tree;
}

}  // namespace softtree
