// Quickstart: generate data, train a soft tree, score it, and print the DOT
// rendering of what the gates learned.

#include <cstdio>

#include <softtree/softtree.hpp>

int main() {
  using namespace softtree;

  // 1. Synthetic binary classification task.
  SynthSpec synth;
  synth.n_samples = 600;
  synth.n_features = 8;
  synth.n_informative = 4;
  synth.class_sep = 2.0;
  synth.seed = 7;
  const Dataset data = make_synth(synth);

  // 2. Stratified 80/20 split, standardize on the training side.
  auto [train_set, test_set] = split(data, 0.8, /*seed=*/7);
  const Standardizer stats = fit_standardizer(train_set.X);
  train_set.X = apply_standardizer(stats, train_set.X);
  test_set.X = apply_standardizer(stats, test_set.X);

  // 3. Depth-2 soft tree trained with Adam.
  TreeConfig cfg;
  cfg.depth = 2;
  cfg.input_dim = data.dim();
  cfg.n_classes = 2;
  cfg.variant = Variant::kSdt;
  cfg.lambda = 0.1;
  cfg.seed = 7;

  TrainConfig tc;
  tc.epochs = 80;
  tc.batch_size = 64;
  tc.shuffle_seed = 7;
  tc.history_every = 20;

  auto [tree, history] = train(init_tree(cfg), train_set, tc);
  for (const auto& rec : history.records)
    std::printf("epoch %4zu  loss %.4f (data %.4f + penalty %.4f)\n", rec.epoch,
                rec.loss.total, rec.loss.data_term, rec.loss.penalty_term);

  // 4. Test ROC-AUC from the mixture's positive-class probability.
  const PredictResult pred = predict_batch(tree, test_set.X);
  std::vector<double> scores(test_set.size());
  for (std::size_t r = 0; r < test_set.size(); ++r) scores[r] = pred.proba(r, 1);
  std::printf("test AUC %.4f\n", roc_auc(scores, test_set.y).auc);

  // 5. Gate-level view of the trained tree.
  const GateTrace trace = gate_trace(tree, test_set.X);
  std::printf("%s", export_dot(tree, trace, data.feature_names, 2).c_str());
  return 0;
}
