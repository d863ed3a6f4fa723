#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "softtree/dataset.hpp"
#include "softtree/errors.hpp"
#include "softtree/matrix.hpp"
#include "softtree/rng.hpp"

namespace softtree {

// ============================================================================
// Standardization
// ============================================================================

// Per-feature z-score parameters, fit on the training partition only.
// Population standard deviation (1/n) convention; near-constant features
// (sigma < 1e-12) get scale 1 so they pass through unchanged.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
};

inline Standardizer fit_standardizer(const Matrix& x_train) {
  if (x_train.rows() == 0) throw InputError("fit_standardizer: empty matrix");
  const std::size_t n = x_train.rows();
  const std::size_t d = x_train.cols();

  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) sum += x_train(r, c);
    s.mean[c] = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double diff = x_train(r, c) - s.mean[c];
      ss += diff * diff;
    }
    const double sigma = std::sqrt(ss / static_cast<double>(n));
    s.scale[c] = sigma < 1e-12 ? 1.0 : sigma;
  }
  return s;
}

inline Matrix apply_standardizer(const Standardizer& s, const Matrix& x) {
  if (x.cols() != s.mean.size())
    throw InputError("apply_standardizer: matrix has " + std::to_string(x.cols()) +
                     " columns, standardizer has " + std::to_string(s.mean.size()));
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      out(r, c) = (x(r, c) - s.mean[c]) / s.scale[c];
  return out;
}

// ============================================================================
// Train/test split
// ============================================================================

namespace detail {

inline Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.X = Matrix(idx.size(), data.X.cols());
  out.y.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = data.X.row(idx[r]);
    std::copy(src.begin(), src.end(), out.X.row(r).begin());
    out.y[r] = data.y[idx[r]];
  }
  out.feature_names = data.feature_names;
  out.positive_label = data.positive_label;
  out.source = data.source;
  return out;
}

// Number of training rows out of n at the given fraction, clamped so both
// sides keep at least one row.
inline std::size_t train_count(std::size_t n, double frac) {
  auto k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

}  // namespace detail

// Seeded train/test split. Stratified (the default) shuffles each class
// separately — classes visited in ascending label order from one RNG stream —
// so class proportions carry over within one sample. Row order within each
// partition follows the original dataset order.
inline std::pair<Dataset, Dataset> split(const Dataset& data, double train_frac,
                                         std::uint64_t seed, bool stratified = true) {
  if (data.size() == 0) throw InputError("split: empty dataset");
  if (data.y.size() != data.X.rows())
    throw InputError("split: label count does not match row count");
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw InputError("split: train_frac must lie strictly between 0 and 1");

  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;

  if (stratified) {
    std::map<int, std::vector<std::size_t>> by_class;  // ascending label order
    for (std::size_t r = 0; r < data.size(); ++r) by_class[data.y[r]].push_back(r);
    for (auto& [label, rows] : by_class) {
      if (rows.size() < 2)
        throw InputError("split: class " + std::to_string(label) +
                         " has fewer than 2 samples; cannot stratify");
      const auto perm = rng.permutation(rows.size());
      const std::size_t k = detail::train_count(rows.size(), train_frac);
      for (std::size_t i = 0; i < rows.size(); ++i)
        (i < k ? train_idx : test_idx).push_back(rows[perm[i]]);
    }
  } else {
    if (data.size() < 2) throw InputError("split: need at least 2 samples");
    const auto perm = rng.permutation(data.size());
    const std::size_t k = detail::train_count(data.size(), train_frac);
    for (std::size_t i = 0; i < data.size(); ++i)
      (i < k ? train_idx : test_idx).push_back(perm[i]);
  }

  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {detail::take_rows(data, train_idx), detail::take_rows(data, test_idx)};
}

}  // namespace softtree
