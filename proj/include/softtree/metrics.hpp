#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "softtree/errors.hpp"

namespace softtree {

struct AucResult {
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

// ROC-AUC by the midrank (Mann-Whitney) formulation:
//   AUC = (R_pos - n_pos(n_pos+1)/2) / (n_pos * n_neg)
// where R_pos is the sum of midranks of the positive-class scores. Tied
// scores share the average of their rank range, which makes the result equal
// to pairwise counting with ties worth 0.5 — exactly, since every midrank is
// a multiple of 0.5 and sums stay well inside integer-exact double range.
// O(n log n).
inline AucResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw InputError("roc_auc: scores and labels differ in length");
  if (scores.empty()) throw InputError("roc_auc: empty input");

  AucResult res;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++res.n_pos;
    } else if (labels[i] == 0) {
      ++res.n_neg;
    } else {
      throw InputError("roc_auc: labels must be 0 or 1");
    }
    if (!std::isfinite(scores[i]))
      throw InputError("roc_auc: non-finite score");
  }
  if (res.n_pos == 0 || res.n_neg == 0)
    throw InputError("roc_auc: AUC undefined with a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // 1-based ranks i+1 .. j share the midrank (i+1 + j) / 2.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    i = j;
  }

  const double np = static_cast<double>(res.n_pos);
  const double nn = static_cast<double>(res.n_neg);
  res.auc = (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
  return res;
}

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1 denominator), 0 when n=1
  std::size_t n = 0;
};

inline Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw InputError("aggregate: empty input");
  Aggregate agg;
  agg.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(agg.n);
  if (agg.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.std = std::sqrt(ss / static_cast<double>(agg.n - 1));
  }
  return agg;
}

}  // namespace softtree
