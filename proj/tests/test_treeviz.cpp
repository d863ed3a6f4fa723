// Gate tracing, DOT export, golden files, and history serialization.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <softtree/errors.hpp>
#include <softtree/forward.hpp>
#include <softtree/rng.hpp>
#include <softtree/softtree_testing.hpp>
#include <softtree/trainer.hpp>
#include <softtree/tree.hpp>
#include <softtree/treeviz.hpp>

using namespace softtree;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, Rng& rng) {
  Matrix x(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) x(r, c) = rng.normal();
  return x;
}

std::vector<std::string> generic_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d; ++i) names.push_back("f" + std::to_string(i));
  return names;
}

// Minimal DOT well-formedness check: one digraph block, node/edge statements
// only, quoted labels with even unescaped-quote counts per line.
void check_dot_grammar(const std::string& dot, std::size_t expect_nodes,
                       std::size_t expect_edges) {
  std::istringstream in(dot);
  std::string line;
  std::size_t nodes = 0, edges = 0, braces_open = 0, braces_close = 0;
  bool in_graph = false;
  while (std::getline(in, line)) {
    if (line.rfind("//", 0) == 0) continue;  // header comments
    std::size_t quotes = 0;
    for (std::size_t i = 0; i < line.size(); ++i)
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) ++quotes;
    REQUIRE(quotes % 2 == 0);

    if (line == "digraph softtree {") {
      ++braces_open;
      in_graph = true;
      continue;
    }
    if (line == "}") {
      ++braces_close;
      in_graph = false;
      continue;
    }
    REQUIRE(in_graph);
    REQUIRE(line.rfind("  ", 0) == 0);       // two-space indent
    REQUIRE(line.back() == ';');
    if (line.find("->") != std::string::npos) {
      ++edges;
      const bool labeled = line.find("[label=\"L\"]") != std::string::npos ||
                           line.find("[label=\"R\"]") != std::string::npos;
      REQUIRE(labeled);
    } else if (line.find("[label=") != std::string::npos) {
      ++nodes;
    } else {
      REQUIRE(line.find("node [") != std::string::npos);  // style line
    }
  }
  CHECK(braces_open == 1);
  CHECK(braces_close == 1);
  CHECK(nodes == expect_nodes);
  CHECK(edges == expect_edges);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// gate_trace
// ---------------------------------------------------------------------------

TEST_CASE("gate_trace on a zero tree halves mass at every level") {
  for (const std::size_t depth : {1u, 2u, 3u}) {
    TreeConfig cfg;
    cfg.depth = depth;
    cfg.input_dim = 3;
    cfg.n_classes = 2;
    SoftTree tree = init_tree(cfg);
    for (auto& node : tree.inner) {
      std::fill(node.w.begin(), node.w.end(), 0.0);
      node.b = 0.0;
    }
    Rng rng(1);
    const Matrix x = random_matrix(20, 3, rng);
    const GateTrace trace = gate_trace(tree, x);
    for (const double g : trace.mean_gate) CHECK(g == 0.5);
    const double expect = std::ldexp(1.0, -static_cast<int>(depth));
    for (const double mass : trace.leaf_mass)
      CHECK(mass == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("gate_trace of a single sample equals that sample's forward trace") {
  TreeConfig cfg;
  cfg.depth = 2;
  cfg.input_dim = 4;
  cfg.n_classes = 3;
  cfg.variant = Variant::kSmSdt;
  cfg.seed = 44;
  const SoftTree tree = init_tree(cfg);
  Rng rng(5);
  const Matrix x = random_matrix(1, 4, rng);
  const GateTrace trace = gate_trace(tree, x);
  const ForwardTrace fwd = forward(tree, x.row(0));
  for (std::size_t i = 0; i < tree.config.n_inner(); ++i) {
    CHECK(trace.mean_gate[i] == fwd.gates[i]);
    CHECK(trace.arrival_mass[i] == fwd.arrival[i]);
  }
  for (std::size_t l = 0; l < tree.config.n_leaves(); ++l)
    CHECK(trace.leaf_mass[l] == fwd.path_probs[l]);
}

TEST_CASE("gate_trace leaf masses sum to one on random trees") {
  Rng rng(303);
  for (int trial = 0; trial < 10; ++trial) {
    TreeConfig cfg;
    cfg.depth = 1 + rng.below(3);
    cfg.input_dim = 2 + rng.below(4);
    cfg.n_classes = 2;
    cfg.variant = trial % 2 == 0 ? Variant::kSdt : Variant::kSmSdt;
    cfg.seed = 100 + static_cast<std::uint64_t>(trial);
    const SoftTree tree = init_tree(cfg);
    const Matrix x = random_matrix(8 + rng.below(20), cfg.input_dim, rng);
    const GateTrace trace = gate_trace(tree, x);
    double total = 0.0;
    for (const double mass : trace.leaf_mass) {
      total += mass;
      CHECK(mass >= 0.0);
      CHECK(mass <= 1.0);
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-9));
    for (const double g : trace.mean_gate) {
      CHECK(g >= 0.0);
      CHECK(g <= 1.0);
    }
  }
}

TEST_CASE("gate_trace input validation") {
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  const SoftTree tree = init_tree(cfg);
  CHECK_THROWS_AS(gate_trace(tree, Matrix(0, 2)), InputError);
  CHECK_THROWS_AS(gate_trace(tree, Matrix(3, 5)), InputError);
}

// ---------------------------------------------------------------------------
// export_dot
// ---------------------------------------------------------------------------

TEST_CASE("export_dot renders the depth-1 zero tree") {
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  SoftTree tree = init_tree(cfg);
  std::fill(tree.inner[0].w.begin(), tree.inner[0].w.end(), 0.0);
  tree.inner[0].b = 0.0;
  Rng rng(2);
  const Matrix x = random_matrix(10, 2, rng);
  const std::string dot = export_dot(tree, gate_trace(tree, x), {"f0", "f1"});

  check_dot_grammar(dot, 3, 2);
  CHECK(dot.find("0.500/0.500") != std::string::npos);
  CHECK(dot.find("g=0.500") != std::string::npos);
}

TEST_CASE("export_dot lists features by weight magnitude") {
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 3;
  cfg.n_classes = 2;
  SoftTree tree = init_tree(cfg);
  tree.inner[0].w = {0.1, -2.0, 0.5};
  tree.inner[0].b = 0.0;
  Rng rng(3);
  const Matrix x = random_matrix(5, 3, rng);
  const std::string dot =
      export_dot(tree, gate_trace(tree, x), {"f0", "f1", "f2"}, /*top_k=*/2);

  const auto pos_f1 = dot.find("f1 -2");
  const auto pos_f2 = dot.find("f2 +0.5");
  REQUIRE(pos_f1 != std::string::npos);
  REQUIRE(pos_f2 != std::string::npos);
  CHECK(pos_f1 < pos_f2);                        // ordered by |w|
  CHECK(dot.find("f0 ") == std::string::npos);   // truncated at top_k
}

TEST_CASE("export_dot node and edge counts per depth, both variants") {
  Rng rng(14);
  for (const auto variant : {Variant::kSdt, Variant::kSmSdt}) {
    for (const std::size_t depth : {1u, 2u, 3u}) {
      TreeConfig cfg;
      cfg.depth = depth;
      cfg.input_dim = 5;
      cfg.n_classes = 2;
      cfg.variant = variant;
      cfg.seed = depth;
      const SoftTree tree = init_tree(cfg);
      const Matrix x = random_matrix(12, 5, rng);
      const std::string dot =
          export_dot(tree, gate_trace(tree, x), generic_names(5));
      check_dot_grammar(dot, (std::size_t{1} << (depth + 1)) - 1,
                        (std::size_t{1} << (depth + 1)) - 2);
      if (variant == Variant::kSmSdt) {
        CHECK(dot.find("parent") != std::string::npos);
        // parent/grandparent fill at most two of the three label slots, so
        // at least one hidden-unit weight must be listed somewhere.
        bool any_hidden = false;
        for (int h = 0; h < 10 && !any_hidden; ++h)
          any_hidden = dot.find("h" + std::to_string(h) + " ") !=
                       std::string::npos;
        CHECK(any_hidden);
      }
    }
  }
}

TEST_CASE("export_dot escapes quotes in feature names") {
  TreeConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.seed = 9;
  const SoftTree tree = init_tree(cfg);
  Rng rng(6);
  const Matrix x = random_matrix(4, 2, rng);
  const std::string dot =
      export_dot(tree, gate_trace(tree, x), {"say \"hi\"", "b\\slash"});
  check_dot_grammar(dot, 3, 2);
  CHECK(dot.find("say \\\"hi\\\"") != std::string::npos);
  CHECK(dot.find("b\\\\slash") != std::string::npos);
}

TEST_CASE("export_dot is deterministic and validates name counts") {
  TreeConfig cfg;
  cfg.depth = 2;
  cfg.input_dim = 3;
  cfg.n_classes = 2;
  cfg.seed = 77;
  const SoftTree tree = init_tree(cfg);
  Rng rng(8);
  const Matrix x = random_matrix(9, 3, rng);
  const GateTrace trace = gate_trace(tree, x);
  CHECK(export_dot(tree, trace, generic_names(3)) ==
        export_dot(tree, trace, generic_names(3)));
  CHECK_THROWS_AS(export_dot(tree, trace, generic_names(2)), InputError);
}

TEST_CASE("export_dot matches the committed golden files") {
  for (const std::size_t depth : {1u, 2u, 3u}) {
    const std::string fresh = testing::golden_dot(depth);
    const std::string committed =
        read_file(std::string(SOFTTREE_SOURCE_DIR) + "/tests/golden/tree_d" +
                  std::to_string(depth) + ".dot");
    CHECK(fresh == committed);
  }
}

// ---------------------------------------------------------------------------
// history export
// ---------------------------------------------------------------------------

namespace {

TrainHistory tiny_history(bool snapshots) {
  Rng rng(21);
  Dataset data;
  data.X = random_matrix(30, 2, rng);
  data.y.resize(30);
  for (std::size_t i = 0; i < 30; ++i) data.y[i] = data.X(i, 0) > 0.0 ? 1 : 0;

  TreeConfig cfg;
  cfg.depth = 2;
  cfg.input_dim = 2;
  cfg.n_classes = 2;
  cfg.lambda = 0.05;
  cfg.seed = 13;
  TrainConfig tc;
  tc.epochs = 3;
  tc.val_fraction = 0.2;
  tc.record_snapshots = snapshots;
  return train(init_tree(cfg), data, tc).second;
}

}  // namespace

TEST_CASE("history round-trips losslessly through JSON lines") {
  const TrainHistory history = tiny_history(/*snapshots=*/true);
  const std::string path = "/tmp/softtree_history_roundtrip.jsonl";
  export_history(history, path);
  const TrainHistory back = read_history(path);

  REQUIRE(back.records.size() == history.records.size());
  for (std::size_t i = 0; i < history.records.size(); ++i) {
    const auto& a = history.records[i];
    const auto& b = back.records[i];
    CHECK(a.epoch == b.epoch);
    CHECK(a.loss.total == b.loss.total);      // exact: shortest round-trip
    CHECK(a.loss.data_term == b.loss.data_term);
    CHECK(a.loss.penalty_term == b.loss.penalty_term);
    CHECK(a.alpha == b.alpha);
    REQUIRE(a.val_auc.has_value() == b.val_auc.has_value());
    if (a.val_auc) CHECK(*a.val_auc == *b.val_auc);
    REQUIRE(a.snapshot.has_value() == b.snapshot.has_value());
    if (a.snapshot)
      CHECK(tree_to_json(*a.snapshot) == tree_to_json(*b.snapshot));
  }
}

TEST_CASE("history line count and schema") {
  const TrainHistory history = tiny_history(/*snapshots=*/false);
  const std::string path = "/tmp/softtree_history_lines.jsonl";
  export_history(history, path);
  const std::string text = read_file(path);
  std::size_t lines = 0;
  for (const char ch : text) lines += ch == '\n';
  CHECK(lines == history.records.size());

  // Every record carries an alpha entry per inner node.
  const TrainHistory back = read_history(path);
  for (const auto& rec : back.records) CHECK(rec.alpha.size() == 3);

  CHECK_THROWS_AS(export_history(TrainHistory{}, "/tmp/x.jsonl"), InputError);
  std::ofstream bad("/tmp/softtree_history_bad.jsonl", std::ios::binary);
  bad << "{\"epoch\": 0}\nnot json\n";
  bad.close();
  CHECK_THROWS_AS(read_history("/tmp/softtree_history_bad.jsonl"), SchemaError);
}
