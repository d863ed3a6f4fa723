#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "softtree/adam.hpp"
#include "softtree/dataset.hpp"
#include "softtree/errors.hpp"
#include "softtree/forward.hpp"
#include "softtree/gradients.hpp"
#include "softtree/metrics.hpp"
#include "softtree/preprocess.hpp"
#include "softtree/tree.hpp"

namespace softtree {

struct HistoryRecord {
  std::size_t epoch = 0;            // number of completed epochs
  LossValue loss;                   // over the full training partition
  std::vector<double> alpha;        // per-inner-node batch-average gate
  std::optional<double> val_auc;    // binary problems with a validation carve-out
  std::optional<SoftTree> snapshot; // full parameters, when requested
};

struct TrainHistory {
  std::vector<HistoryRecord> records;
};

namespace detail {

// Distinct seed stream for the validation carve-out, so shuffling and
// splitting do not share draws.
constexpr std::uint64_t kValSplitStream = 0xa076'1d64'78bd'642fULL;

inline HistoryRecord make_record(const SoftTree& tree, std::size_t epoch,
                                 const Dataset& train_set, const Dataset* val_set,
                                 bool snapshot) {
  HistoryRecord rec;
  rec.epoch = epoch;
  rec.loss = loss_batch(tree, train_set.X, train_set.y, &rec.alpha);
  if (val_set && val_set->size() > 0 && tree.config.n_classes == 2) {
    const PredictResult pred = predict_batch(tree, val_set->X);
    std::vector<double> scores(val_set->size());
    for (std::size_t r = 0; r < scores.size(); ++r) scores[r] = pred.proba(r, 1);
    rec.val_auc = roc_auc(scores, val_set->y).auc;
  }
  if (snapshot) rec.snapshot = tree;
  return rec;
}

}  // namespace detail

// Mini-batch Adam over seeded-shuffled epochs. One permutation per epoch from
// a dedicated RNG stream; the last partial batch is kept. History is recorded
// before training (epoch 0), every history_every epochs, and always at the
// final epoch. Deterministic given (tree, dataset, cfg).
inline std::pair<SoftTree, TrainHistory> train(SoftTree tree, const Dataset& data,
                                               const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw InputError("train: empty dataset");
  if (data.X.cols() != tree.config.input_dim)
    throw InputError("train: dataset has " + std::to_string(data.X.cols()) +
                     " features, tree expects " +
                     std::to_string(tree.config.input_dim));
  if (data.y.size() != data.X.rows())
    throw InputError("train: label count does not match row count");

  // Optional validation carve-out (AUC tracking only — no early stopping).
  Dataset train_set;
  Dataset val_set;
  const Dataset* train_ptr = &data;
  const Dataset* val_ptr = nullptr;
  if (cfg.val_fraction > 0.0) {
    std::tie(train_set, val_set) =
        split(data, 1.0 - cfg.val_fraction,
              cfg.shuffle_seed ^ detail::kValSplitStream, /*stratified=*/true);
    train_ptr = &train_set;
    val_ptr = &val_set;
  }

  const std::size_t n = train_ptr->size();
  const std::size_t d = tree.config.input_dim;

  TrainHistory history;
  history.records.push_back(
      detail::make_record(tree, 0, *train_ptr, val_ptr, cfg.record_snapshots));
  if (!std::isfinite(history.records.front().loss.total))
    throw DivergenceError("non-finite loss at epoch 0");

  AdamState state = AdamState::init(tree);
  Rng shuffle_rng(cfg.shuffle_seed);
  Matrix xb;
  std::vector<int> yb;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto perm = shuffle_rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - start);
      xb = Matrix(bs, d);
      yb.resize(bs);
      for (std::size_t r = 0; r < bs; ++r) {
        const auto src = train_ptr->X.row(perm[start + r]);
        std::copy(src.begin(), src.end(), xb.row(r).begin());
        yb[r] = train_ptr->y[perm[start + r]];
      }
      const auto [grads, loss] = grad_batch(tree, xb, yb);
      if (!std::isfinite(loss.total))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
      adam_step(tree, grads, state, cfg);
    }
    if (epoch % cfg.history_every == 0 || epoch == cfg.epochs) {
      history.records.push_back(detail::make_record(tree, epoch, *train_ptr,
                                                    val_ptr, cfg.record_snapshots));
      if (!std::isfinite(history.records.back().loss.total))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
    }
  }

  return {std::move(tree), std::move(history)};
}

}  // namespace softtree
