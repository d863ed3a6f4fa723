// Adam updates and the mini-batch training loop.

#include <cmath>
#include <limits>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <softtree/adam.hpp>
#include <softtree/dataset.hpp>
#include <softtree/errors.hpp>
#include <softtree/gradients.hpp>
#include <softtree/metrics.hpp>
#include <softtree/model_io.hpp>
#include <softtree/rng.hpp>
#include <softtree/trainer.hpp>
#include <softtree/tree.hpp>

using namespace softtree;

namespace {

TreeConfig tiny_config() {
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 1;
  cfg.n_classes = 2;
  cfg.seed = 3;
  return cfg;
}

// 200 samples, 2 features, classes split along the first axis.
Dataset separable_toy(std::uint64_t seed = 17) {
  Rng rng(seed);
  Dataset d;
  d.X = Matrix(200, 2);
  d.y.resize(200);
  for (std::size_t i = 0; i < 200; ++i) {
    const int label = i % 2 == 0 ? 0 : 1;
    d.X(i, 0) = (label == 0 ? -2.0 : 2.0) + 0.5 * rng.normal();
    d.X(i, 1) = rng.normal();
    d.y[i] = label;
  }
  d.feature_names = {"x0", "x1"};
  return d;
}

double train_auc(const SoftTree& tree, const Dataset& d) {
  const PredictResult pred = predict_batch(tree, d.X);
  std::vector<double> scores(d.size());
  for (std::size_t r = 0; r < d.size(); ++r) scores[r] = pred.proba(r, 1);
  return roc_auc(scores, d.y).auc;
}

std::string params_fingerprint(const SoftTree& tree) {
  return tree_to_json(tree).dump();
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("adam config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.adam_beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.adam_beta2 = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.history_every = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.val_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  const SoftTree tree = init_tree(tiny_config());
  SoftTree stepped = tree;
  AdamState state = AdamState::init(stepped);
  const Gradients zeros = Gradients::zeros_like(stepped);
  adam_step(stepped, zeros, state, TrainConfig{});
  CHECK(state.t == 1);
  CHECK(params_fingerprint(stepped) == params_fingerprint(tree));
  adam_step(stepped, zeros, state, TrainConfig{});
  CHECK(state.t == 2);
  CHECK(params_fingerprint(stepped) == params_fingerprint(tree));
}

TEST_CASE("adam matches the two-step scalar oracle") {
  // Single tracked scalar: gradient 0.5 then -0.25 at lr=0.1 moves
  // p = 1.0 -> 0.900000002 -> 0.8733662987078463 (hand-computed Adam).
  SoftTree tree = init_tree(tiny_config());
  tree.inner[0].w[0] = 1.0;
  AdamState state = AdamState::init(tree);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;

  Gradients g = Gradients::zeros_like(tree);
  g.inner[0].w[0] = 0.5;
  adam_step(tree, g, state, cfg);
  CHECK(tree.inner[0].w[0] == Catch::Approx(0.900000002).epsilon(1e-14));
  CHECK(state.m.inner[0].w[0] == Catch::Approx(0.05).epsilon(1e-14));
  CHECK(state.v.inner[0].w[0] == Catch::Approx(0.00025).epsilon(1e-14));
}

TEST_CASE("adam second step and untouched parameters") {
  SoftTree tree = init_tree(tiny_config());
  tree.inner[0].w[0] = 1.0;
  const double b_before = tree.inner[0].b;
  const auto phi_before = tree.leaves[0].phi;
  AdamState state = AdamState::init(tree);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;

  Gradients g = Gradients::zeros_like(tree);
  g.inner[0].w[0] = 0.5;
  adam_step(tree, g, state, cfg);
  g.inner[0].w[0] = -0.25;
  adam_step(tree, g, state, cfg);
  CHECK(tree.inner[0].w[0] == Catch::Approx(0.8733662987078463).epsilon(1e-14));
  CHECK(tree.inner[0].b == b_before);
  CHECK(tree.leaves[0].phi == phi_before);
  CHECK(state.t == 2);
}

TEST_CASE("adam rejects mismatched shapes") {
  SoftTree tree = init_tree(tiny_config());
  TreeConfig other = tiny_config();
  other.input_dim = 4;
  const SoftTree wide = init_tree(other);
  AdamState state = AdamState::init(tree);
  const Gradients bad = Gradients::zeros_like(wide);
  CHECK_THROWS_AS(adam_step(tree, bad, state, TrainConfig{}), std::logic_error);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TEST_CASE("train fits a separable toy problem") {
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.lambda = 0.1;
  cfg.seed = 5;
  TrainConfig tc;
  tc.epochs = 100;
  tc.shuffle_seed = 11;

  auto [tree, history] = train(init_tree(cfg), data, tc);
  const auto& first = history.records.front();
  const auto& last = history.records.back();

  CHECK(first.epoch == 0);
  CHECK(first.loss.data_term ==
        Catch::Approx(0.6931471805599453).margin(1e-9));  // ln 2 pre-training
  CHECK(last.loss.data_term < 0.3);
  CHECK(train_auc(tree, data) > 0.95);
  CHECK(last.loss.total < 0.5 * first.loss.total);  // at least halved
}

TEST_CASE("train on three classes starts at ln 3") {
  Rng rng(2);
  Dataset data;
  data.X = Matrix(60, 3);
  data.y.resize(60);
  for (std::size_t i = 0; i < 60; ++i) {
    for (std::size_t c = 0; c < 3; ++c) data.X(i, c) = rng.normal();
    data.y[i] = static_cast<int>(i % 3);
  }
  TreeConfig cfg;
  cfg.depth = 2;
  cfg.input_dim = 3;
  cfg.n_classes = 3;
  cfg.seed = 1;
  TrainConfig tc;
  tc.epochs = 2;
  auto [tree, history] = train(init_tree(cfg), data, tc);
  CHECK(history.records.front().loss.data_term ==
        Catch::Approx(1.0986122886681098).margin(1e-9));
}

TEST_CASE("train is bit-identical across runs and seed-sensitive") {
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 2;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.variant = Variant::kSmSdt;
  cfg.seed = 9;
  TrainConfig tc;
  tc.epochs = 5;
  tc.shuffle_seed = 21;

  const auto a = train(init_tree(cfg), data, tc);
  const auto b = train(init_tree(cfg), data, tc);
  CHECK(params_fingerprint(a.first) == params_fingerprint(b.first));
  REQUIRE(a.second.records.size() == b.second.records.size());
  for (std::size_t i = 0; i < a.second.records.size(); ++i)
    CHECK(a.second.records[i].loss.total == b.second.records[i].loss.total);

  TrainConfig other = tc;
  other.shuffle_seed = 22;
  const auto c = train(init_tree(cfg), data, other);
  CHECK(params_fingerprint(a.first) != params_fingerprint(c.first));
}

TEST_CASE("train history follows the recording cadence") {
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.seed = 4;

  TrainConfig tc;
  tc.epochs = 10;
  tc.history_every = 4;
  const auto [tree, history] = train(init_tree(cfg), data, tc);
  std::vector<std::size_t> epochs;
  for (const auto& rec : history.records) epochs.push_back(rec.epoch);
  CHECK(epochs == std::vector<std::size_t>{0, 4, 8, 10});

  TrainConfig sparse = tc;
  sparse.history_every = 100;
  const auto [t2, h2] = train(init_tree(cfg), data, sparse);
  epochs.clear();
  for (const auto& rec : h2.records) epochs.push_back(rec.epoch);
  CHECK(epochs == std::vector<std::size_t>{0, 10});
}

TEST_CASE("train records gate balance inside the clamp range") {
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 3;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.lambda = 0.2;
  cfg.seed = 8;
  TrainConfig tc;
  tc.epochs = 15;
  const auto [tree, history] = train(init_tree(cfg), data, tc);
  for (const auto& rec : history.records) {
    REQUIRE(rec.alpha.size() == cfg.n_inner());
    for (const double a : rec.alpha) {
      CHECK(a >= 1e-6);
      CHECK(a <= 1.0 - 1e-6);
    }
  }
}

TEST_CASE("train tracks validation AUC when a fraction is carved out") {
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.seed = 6;
  TrainConfig tc;
  tc.epochs = 40;
  tc.val_fraction = 0.25;
  const auto [tree, history] = train(init_tree(cfg), data, tc);
  for (const auto& rec : history.records) REQUIRE(rec.val_auc.has_value());
  CHECK(*history.records.back().val_auc > 0.95);

  TrainConfig no_val;
  no_val.epochs = 2;
  const auto [t2, h2] = train(init_tree(cfg), data, no_val);
  for (const auto& rec : h2.records) CHECK_FALSE(rec.val_auc.has_value());
}

TEST_CASE("train snapshots match the returned parameters at the end") {
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.seed = 12;
  TrainConfig tc;
  tc.epochs = 3;
  tc.record_snapshots = true;
  const auto [tree, history] = train(init_tree(cfg), data, tc);
  for (const auto& rec : history.records) REQUIRE(rec.snapshot.has_value());
  CHECK(params_fingerprint(*history.records.back().snapshot) ==
        params_fingerprint(tree));
  CHECK(params_fingerprint(*history.records.front().snapshot) !=
        params_fingerprint(tree));
}

TEST_CASE("train accepts batches larger than the dataset") {
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.seed = 2;
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 100000;
  const auto [tree, history] = train(init_tree(cfg), data, tc);
  CHECK(history.records.back().loss.total <
        history.records.front().loss.total);
}

TEST_CASE("train rejects bad inputs") {
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 3;  // dataset has 2 features
  cfg.n_classes = 2;
  CHECK_THROWS_AS(train(init_tree(cfg), data, TrainConfig{}), InputError);

  cfg.input_dim = 2;
  TrainConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(init_tree(cfg), data, bad), ConfigError);
  CHECK_THROWS_AS(train(init_tree(cfg), Dataset{}, TrainConfig{}), InputError);
}

TEST_CASE("train raises a divergence error naming the epoch") {
  // Gates are clamped, the leaf log-softmax is shift-stable, and Adam updates
  // are magnitude-bounded, so a healthy run cannot overflow; the guard exists
  // for poisoned starting parameters (e.g. a corrupted saved model resumed
  // for training), where the very first loss evaluation is already infinite.
  const Dataset data = separable_toy();
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.seed = 1;
  SoftTree tree = init_tree(cfg);
  const double huge = std::numeric_limits<double>::max();
  tree.leaves[0].phi = {huge, -huge};  // log-softmax gap overflows to -inf
  CHECK_THROWS_MATCHES(train(std::move(tree), data, TrainConfig{}),
                       DivergenceError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("epoch")));
}
