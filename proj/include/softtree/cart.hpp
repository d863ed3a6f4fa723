#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "softtree/errors.hpp"
#include "softtree/matrix.hpp"

namespace softtree {

// Hard, depth-limited CART classifier (gini impurity), used as a baseline.
struct CartNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> freq;  // leaf class frequencies, sum 1

  friend bool operator==(const CartNode&, const CartNode&) = default;
};

struct CartTree {
  std::vector<CartNode> nodes;  // nodes[0] is the root
  std::size_t n_classes = 0;
  std::size_t max_depth = 0;

  friend bool operator==(const CartTree&, const CartTree&) = default;
};

namespace detail {

// Split quality is compared exactly in integers. Maximizing
//   score(split) = sum_c c_L^2 / n_L + sum_c c_R^2 / n_R
// orders splits identically to minimizing the weighted gini impurity, and
// with the common denominator n_L * n_R it becomes the rational
//   (sum c_L^2 * n_R + sum c_R^2 * n_L) / (n_L * n_R),
// so candidates are compared by cross-multiplication with no rounding. Ties
// keep the first candidate encountered: lowest feature index, then lowest
// threshold.
struct CartSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  __int128 num = 0;
  std::uint64_t den = 1;  // n_L * n_R
};

inline __int128 sum_sq(const std::vector<std::uint64_t>& counts) {
  __int128 s = 0;
  for (std::uint64_t c : counts) s += static_cast<__int128>(c) * c;
  return s;
}

struct CartBuilder {
  const Matrix& x;
  const std::vector<int>& y;
  std::size_t n_classes;
  std::size_t max_depth;
  std::size_t min_samples_split;
  std::vector<CartNode> nodes;

  CartSplit best_split(const std::vector<std::size_t>& idx,
                       const std::vector<std::uint64_t>& counts) const {
    const std::size_t n = idx.size();
    // Split only on a strict impurity decrease: score > parent score, i.e.
    // num / den > sum_sq(parent) / n.
    const __int128 parent_num = sum_sq(counts);

    CartSplit best;
    std::vector<std::size_t> order(idx);
    std::vector<std::uint64_t> left_counts(n_classes);
    for (std::size_t f = 0; f < x.cols(); ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x(a, f) < x(b, f);
      });
      std::fill(left_counts.begin(), left_counts.end(), 0);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        ++left_counts[static_cast<std::size_t>(y[order[i]])];
        const double lo = x(order[i], f);
        const double hi = x(order[i + 1], f);
        if (lo == hi) continue;  // candidate thresholds sit between distinct values

        const std::uint64_t nl = i + 1;
        const std::uint64_t nr = n - nl;
        __int128 num = 0;
        for (std::size_t c = 0; c < n_classes; ++c) {
          const std::uint64_t cl = left_counts[c];
          const std::uint64_t cr = counts[c] - cl;
          num += static_cast<__int128>(cl) * cl * nr +
                 static_cast<__int128>(cr) * cr * nl;
        }
        const std::uint64_t den = nl * nr;
        if (num * static_cast<__int128>(n) <= parent_num * static_cast<__int128>(den))
          continue;  // no strict improvement
        if (!best.found || num * static_cast<__int128>(best.den) >
                               best.num * static_cast<__int128>(den)) {
          best.found = true;
          best.feature = f;
          best.threshold = 0.5 * (lo + hi);
          best.num = num;
          best.den = den;
        }
      }
    }
    return best;
  }

  int build(const std::vector<std::size_t>& idx, std::size_t depth) {
    std::vector<std::uint64_t> counts(n_classes, 0);
    for (std::size_t i : idx) ++counts[static_cast<std::size_t>(y[i])];
    const bool pure =
        std::count_if(counts.begin(), counts.end(),
                      [](std::uint64_t c) { return c > 0; }) <= 1;

    CartSplit split;
    if (depth < max_depth && idx.size() >= min_samples_split && !pure)
      split = best_split(idx, counts);

    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (!split.found) {
      nodes[id].freq.resize(n_classes);
      for (std::size_t c = 0; c < n_classes; ++c)
        nodes[id].freq[c] =
            static_cast<double>(counts[c]) / static_cast<double>(idx.size());
      return id;
    }

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : idx)
      (x(i, split.feature) <= split.threshold ? left_idx : right_idx).push_back(i);
    nodes[id].feature = static_cast<int>(split.feature);
    nodes[id].threshold = split.threshold;
    const int l = build(left_idx, depth + 1);
    const int r = build(right_idx, depth + 1);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }
};

}  // namespace detail

// Greedy gini-impurity CART. Candidate thresholds are midpoints between
// consecutive distinct sorted values per feature; ties break to the lowest
// feature index then lowest threshold; nodes stop on purity, depth,
// min_samples_split, or when no split strictly reduces impurity.
inline CartTree cart_fit(const Matrix& x, const std::vector<int>& y,
                         std::size_t max_depth = 3,
                         std::size_t min_samples_split = 2) {
  if (x.rows() == 0) throw InputError("cart_fit: empty dataset");
  if (y.size() != x.rows())
    throw InputError("cart_fit: label count does not match row count");
  if (!x.all_finite()) throw InputError("cart_fit: X contains non-finite values");
  int max_label = 0;
  for (int label : y) {
    if (label < 0) throw InputError("cart_fit: negative label");
    max_label = std::max(max_label, label);
  }

  detail::CartBuilder builder{x, y, static_cast<std::size_t>(max_label) + 1,
                              max_depth, min_samples_split, {}};
  std::vector<std::size_t> all(x.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  builder.build(all, 0);

  CartTree tree;
  tree.nodes = std::move(builder.nodes);
  tree.n_classes = static_cast<std::size_t>(max_label) + 1;
  tree.max_depth = max_depth;
  return tree;
}

// Route rows by hard comparisons (x[f] <= threshold goes left) and return the
// leaf class frequencies. The positive-class score for AUC is column 1.
inline Matrix cart_predict_proba(const CartTree& tree, const Matrix& x) {
  if (tree.nodes.empty()) throw InputError("cart_predict_proba: empty tree");
  Matrix out(x.rows(), tree.n_classes);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const CartNode* node = &tree.nodes[0];
    while (node->feature >= 0) {
      const auto f = static_cast<std::size_t>(node->feature);
      if (f >= x.cols())
        throw InputError("cart_predict_proba: X has too few columns");
      node = &tree.nodes[x(r, f) <= node->threshold ? node->left : node->right];
    }
    std::copy(node->freq.begin(), node->freq.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace softtree
