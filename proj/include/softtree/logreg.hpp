#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "softtree/adam.hpp"
#include "softtree/errors.hpp"
#include "softtree/forward.hpp"
#include "softtree/matrix.hpp"
#include "softtree/rng.hpp"

namespace softtree {

// L2-regularized binary logistic regression baseline.
struct LogRegModel {
  std::vector<double> w;
  double b = 0.0;
  double l2 = 0.0;
};

// Mean log-loss + l2 * ||w||^2 / 2 (bias unregularized). Softplus form keeps
// the log-loss stable for saturated scores.
inline double logreg_loss(const LogRegModel& model, const Matrix& x,
                          const std::vector<int>& y) {
  if (x.rows() == 0) throw InputError("logreg_loss: empty dataset");
  if (y.size() != x.rows())
    throw InputError("logreg_loss: label count does not match row count");
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double z = dot(model.w, x.row(r)) + model.b;
    // softplus(z) - y*z, with softplus(z) = max(z, 0) + log1p(exp(-|z|))
    loss += std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))) -
            static_cast<double>(y[r]) * z;
  }
  loss /= static_cast<double>(x.rows());
  return loss + 0.5 * model.l2 * dot(model.w, model.w);
}

namespace detail {

// Gradient of logreg_loss: (1/n) sum (sigmoid(z) - y) * [x; 1] + l2 * [w; 0].
inline void logreg_grad(const LogRegModel& model, const Matrix& x,
                        const std::vector<int>& y, std::span<const std::size_t> rows,
                        std::vector<double>& gw, double& gb) {
  std::fill(gw.begin(), gw.end(), 0.0);
  gb = 0.0;
  for (const std::size_t r : rows) {
    const double z = dot(model.w, x.row(r)) + model.b;
    const double resid = stable_sigmoid(z) - static_cast<double>(y[r]);
    const auto xr = x.row(r);
    for (std::size_t c = 0; c < gw.size(); ++c) gw[c] += resid * xr[c];
    gb += resid;
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t c = 0; c < gw.size(); ++c)
    gw[c] = gw[c] * inv + model.l2 * model.w[c];
  gb *= inv;
}

}  // namespace detail

// Zero-initialized Adam minibatch fit, mirroring the tree training loop
// (seeded epoch permutations, last partial batch kept, divergence check).
inline LogRegModel logreg_fit(const Matrix& x, const std::vector<int>& y,
                              double l2 = 1e-4, const TrainConfig& cfg = {}) {
  cfg.validate();
  if (x.rows() == 0) throw InputError("logreg_fit: empty dataset");
  if (y.size() != x.rows())
    throw InputError("logreg_fit: label count does not match row count");
  if (!x.all_finite()) throw InputError("logreg_fit: X contains non-finite values");
  if (l2 < 0.0 || !std::isfinite(l2))
    throw ConfigError("logreg_fit: l2 must be non-negative and finite");
  bool saw[2] = {false, false};
  for (int label : y) {
    if (label != 0 && label != 1)
      throw InputError("logreg_fit: labels must be 0 or 1");
    saw[label] = true;
  }
  if (!saw[0] || !saw[1])
    throw InputError("logreg_fit: labels are all one class");

  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  LogRegModel model;
  model.w.assign(d, 0.0);
  model.l2 = l2;

  std::vector<double> gw(d), mw(d, 0.0), vw(d, 0.0);
  double gb = 0.0, mb = 0.0, vb = 0.0;
  std::uint64_t t = 0;
  Rng shuffle_rng(cfg.shuffle_seed);
  std::vector<std::size_t> batch;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto perm = shuffle_rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - start);
      batch.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                   perm.begin() + static_cast<std::ptrdiff_t>(start + bs));
      detail::logreg_grad(model, x, y, batch, gw, gb);

      t += 1;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
      for (std::size_t c = 0; c < d; ++c)
        detail::adam_update(model.w[c], mw[c], vw[c], gw[c], cfg, bc1, bc2);
      detail::adam_update(model.b, mb, vb, gb, cfg, bc1, bc2);
    }
    if (!all_finite(model.w) || !std::isfinite(model.b))
      throw DivergenceError("non-finite parameters at epoch " +
                            std::to_string(epoch));
  }
  return model;
}

// Per-row sigmoid(w.x + b).
inline std::vector<double> logreg_predict_proba(const LogRegModel& model,
                                                const Matrix& x) {
  if (x.rows() > 0 && x.cols() != model.w.size())
    throw InputError("logreg_predict_proba: X has " + std::to_string(x.cols()) +
                     " columns, model expects " + std::to_string(model.w.size()));
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    out[r] = stable_sigmoid(dot(model.w, x.row(r)) + model.b);
  return out;
}

}  // namespace softtree
