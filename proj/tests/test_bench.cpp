// Benchmark grid runner: spec parsing, execution, determinism, rendering.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <softtree/bench.hpp>
#include <softtree/csv.hpp>
#include <softtree/errors.hpp>

using namespace softtree;

namespace {

DatasetRef synth_ref(const std::string& name, std::size_t n = 160) {
  DatasetRef ref;
  ref.name = name;
  SynthSpec spec;
  spec.n_samples = n;
  spec.n_features = 5;
  spec.n_informative = 3;
  spec.class_sep = 2.0;
  ref.synth = spec;
  return ref;
}

BenchSpec quick_spec() {
  BenchSpec spec;
  spec.datasets = {synth_ref("alpha")};
  spec.methods = {Method::kDt};
  spec.repeats = 1;
  spec.base_seed = 5;
  return spec;
}

}  // namespace

TEST_CASE("bench 1x1x1 produces one row and that row is the aggregate") {
  const BenchResult result = run_bench(quick_spec());
  REQUIRE(result.rows.size() == 1);
  const BenchRow& row = result.rows[0];
  CHECK(row.dataset == "alpha");
  CHECK(row.method == "DT");
  CHECK(row.seed == 5000);  // base_seed * 1000 + repeat
  CHECK(row.error.empty());
  CHECK(row.auc >= 0.0);
  CHECK(row.auc <= 1.0);

  char cell[32];
  std::snprintf(cell, sizeof cell, "%.4f", row.auc);
  const std::string table = aggregate_markdown(result);
  CHECK(table.find(std::string("| alpha | ") + cell + " |") != std::string::npos);
  CHECK(table.find(std::string("| Average | ") + cell + " |") !=
        std::string::npos);
}

TEST_CASE("bench rows are deterministic across runs and thread counts") {
  BenchSpec spec;
  spec.datasets = {synth_ref("a"), synth_ref("b", 120)};
  spec.methods = {Method::kDt, Method::kLr, Method::kSdt, Method::kSmSdt};
  spec.repeats = 2;
  spec.base_seed = 3;
  spec.defaults.epochs = 8;  // keep the grid cheap

  setenv("SOFTTREE_THREADS", "1", 1);
  const BenchResult serial = run_bench(spec);
  setenv("SOFTTREE_THREADS", "7", 1);
  const BenchResult parallel = run_bench(spec);
  unsetenv("SOFTTREE_THREADS");

  REQUIRE(serial.rows.size() == 16);
  REQUIRE(parallel.rows.size() == 16);
  for (std::size_t i = 0; i < serial.rows.size(); ++i) {
    CHECK(serial.rows[i].dataset == parallel.rows[i].dataset);
    CHECK(serial.rows[i].method == parallel.rows[i].method);
    CHECK(serial.rows[i].seed == parallel.rows[i].seed);
    CHECK(serial.rows[i].auc == parallel.rows[i].auc);  // bitwise
    CHECK(serial.rows[i].error == parallel.rows[i].error);
  }

  // Sorted by (dataset, method, seed).
  for (std::size_t i = 1; i < serial.rows.size(); ++i) {
    const auto& a = serial.rows[i - 1];
    const auto& b = serial.rows[i];
    CHECK(std::tie(a.dataset, a.method, a.seed) <=
          std::tie(b.dataset, b.method, b.seed));
  }
}

TEST_CASE("bench rows CSV is stable except for wall time") {
  BenchSpec spec = quick_spec();
  spec.repeats = 2;
  const std::string a = rows_csv(run_bench(spec));
  const std::string b = rows_csv(run_bench(spec));

  const auto strip_wall = [](const std::string& csv) {
    std::string out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
      // dataset,method,seed,auc,wall_time_s,error -> drop 5th column
      std::vector<std::string> cols;
      std::istringstream ls(line);
      for (std::string tok; std::getline(ls, tok, ',');) cols.push_back(tok);
      REQUIRE(cols.size() >= 5);
      cols.erase(cols.begin() + 4);
      for (std::size_t i = 0; i < cols.size(); ++i)
        out += cols[i] + (i + 1 < cols.size() ? "," : "");
      out += '\n';
    }
    return out;
  };
  CHECK(strip_wall(a) == strip_wall(b));
  CHECK(a.rfind("dataset,method,seed,auc,wall_time_s,error\n", 0) == 0);
}

TEST_CASE("bench synthetic repeats draw different data per repeat and name") {
  BenchSpec spec;
  spec.datasets = {synth_ref("one"), synth_ref("two")};  // identical synth spec
  spec.methods = {Method::kDt};
  spec.repeats = 2;
  const BenchResult result = run_bench(spec);
  REQUIRE(result.rows.size() == 4);
  // Same generator settings, different names or repeats: the drawn data (and
  // almost surely the AUC) differ between cells.
  CHECK(result.rows[0].auc != result.rows[1].auc);  // repeats differ
  const bool names_differ = result.rows[0].auc != result.rows[2].auc ||
                            result.rows[1].auc != result.rows[3].auc;
  CHECK(names_differ);
}

TEST_CASE("bench records per-cell failures and keeps going") {
  BenchSpec spec;
  DatasetRef broken;
  broken.name = "missing";
  broken.csv_path = "/tmp/softtree_bench_no_such_file.csv";
  broken.label_column = "y";
  broken.positive_label = "1";
  spec.datasets = {broken, synth_ref("fine")};
  spec.methods = {Method::kDt};
  spec.repeats = 2;
  const BenchResult result = run_bench(spec);
  REQUIRE(result.rows.size() == 4);
  for (const auto& row : result.rows) {
    if (row.dataset == "missing") {
      CHECK_FALSE(row.error.empty());
      CHECK(std::isnan(row.auc));
    } else {
      CHECK(row.error.empty());
      CHECK_FALSE(std::isnan(row.auc));
    }
  }
  const std::string table = aggregate_markdown(result);
  CHECK(table.find("| missing | n/a |") != std::string::npos);
}

TEST_CASE("bench validates its spec and environment") {
  BenchSpec spec = quick_spec();
  spec.repeats = 0;
  CHECK_THROWS_AS(run_bench(spec), ConfigError);
  spec = quick_spec();
  spec.methods = {};
  CHECK_THROWS_AS(run_bench(spec), ConfigError);
  spec = quick_spec();
  spec.datasets = {};
  CHECK_THROWS_AS(run_bench(spec), ConfigError);
  spec = quick_spec();
  spec.train_frac = 1.0;
  CHECK_THROWS_AS(run_bench(spec), ConfigError);
  spec = quick_spec();
  spec.datasets.push_back(synth_ref("alpha"));  // duplicate name
  CHECK_THROWS_AS(run_bench(spec), ConfigError);
  spec = quick_spec();
  spec.datasets[0].csv_path = "also_csv.csv";  // both csv and synth
  CHECK_THROWS_AS(run_bench(spec), ConfigError);

  spec = quick_spec();
  setenv("SOFTTREE_THREADS", "banana", 1);
  CHECK_THROWS_AS(run_bench(spec), ConfigError);
  setenv("SOFTTREE_THREADS", "0", 1);
  CHECK_THROWS_AS(run_bench(spec), ConfigError);
  unsetenv("SOFTTREE_THREADS");
}

TEST_CASE("parse_bench_config handles full documents") {
  const nlohmann::json doc = {
      {"base_seed", 42},
      {"repeats", 3},
      {"train_frac", 0.75},
      {"methods", {"SDT", "DT"}},
      {"datasets",
       {{{"name", "synthetic"},
         {"synth",
          {{"n_samples", 500},
           {"n_features", 10},
           {"n_informative", 4},
           {"class_sep", 1.5},
           {"flip_y", 0.02}}}}}},
      {"defaults", {{"epochs", 50}, {"lr", 0.02}}},
      {"overrides", {{"SDT", {{"depth", 4}, {"lambda", 0.3}}}}}};
  const BenchSpec spec = parse_bench_config(doc);
  CHECK(spec.base_seed == 42);
  CHECK(spec.repeats == 3);
  CHECK(spec.train_frac == 0.75);
  REQUIRE(spec.methods.size() == 2);
  CHECK(spec.methods[0] == Method::kSdt);
  REQUIRE(spec.datasets.size() == 1);
  REQUIRE(spec.datasets[0].synth.has_value());
  CHECK(spec.datasets[0].synth->n_samples == 500);
  CHECK(spec.datasets[0].synth->flip_y == 0.02);

  const HyperParams sdt = spec.resolve(Method::kSdt);
  CHECK(sdt.epochs == 50);
  CHECK(sdt.lr == 0.02);
  CHECK(sdt.depth == 4);
  CHECK(sdt.lambda == 0.3);
  const HyperParams dt = spec.resolve(Method::kDt);
  CHECK(dt.depth == 3);  // untouched default
  CHECK(dt.epochs == 50);
}

TEST_CASE("parse_bench_config rejects unknown keys by name and path") {
  const nlohmann::json top = {{"repeatz", 3}};
  CHECK_THROWS_WITH(parse_bench_config(top),
                    Catch::Matchers::ContainsSubstring("repeatz"));

  const nlohmann::json defaults = {
      {"datasets", {{{"name", "d"}, {"synth", {{"n_samples", 50}}}}}},
      {"defaults", {{"batchsz", 9}}}};
  CHECK_THROWS_MATCHES(parse_bench_config(defaults), SchemaError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("batchsz")));

  const nlohmann::json ds = {
      {"datasets", {{{"name", "d"}, {"labelcolumn", "y"}}}}};
  CHECK_THROWS_MATCHES(parse_bench_config(ds), SchemaError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("labelcolumn")));

  const nlohmann::json synth = {
      {"datasets",
       {{{"name", "d"}, {"synth", {{"n_sample", 50}}}}}}};  // typo
  CHECK_THROWS_MATCHES(parse_bench_config(synth), SchemaError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("n_sample")));

  const nlohmann::json method = {{"methods", {"SDT", "XGB"}}};
  CHECK_THROWS_AS(parse_bench_config(method), ConfigError);
}

TEST_CASE("parse_bench_config merges dataset config files with inline keys") {
  const std::string cfg_path = "/tmp/softtree_bench_dataset_cfg.json";
  {
    std::ofstream out(cfg_path, std::ios::binary);
    out << R"({"name": "from_file", "csv": "file.csv", "label_column": "y",
               "positive_label": "1", "notes": "text ignored by the runner"})";
  }
  const nlohmann::json doc = {
      {"datasets",
       {{{"config", cfg_path}, {"name", "renamed"}, {"drop_columns", {"id"}}}}}};
  const BenchSpec spec = parse_bench_config(doc);
  REQUIRE(spec.datasets.size() == 1);
  CHECK(spec.datasets[0].name == "renamed");  // inline wins
  CHECK(spec.datasets[0].csv_path == "file.csv");
  CHECK(spec.datasets[0].label_column == "y");
  CHECK(spec.datasets[0].drop_columns == std::vector<std::string>{"id"});

  // Unknown key inside the pointed-to file is also rejected.
  {
    std::ofstream out(cfg_path, std::ios::binary);
    out << R"({"name": "x", "csv": "f.csv", "label_column": "y", "sep": ";"})";
  }
  CHECK_THROWS_MATCHES(parse_bench_config(doc), SchemaError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("sep")));
}

TEST_CASE("bundled clinical dataset configs parse cleanly") {
  // Every committed dataset config must at least pass schema validation when
  // referenced from a bench document.
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(SOFTTREE_SOURCE_DIR) / "data" / "configs";
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    const nlohmann::json doc = {
        {"datasets", {{{"config", entry.path().string()}}}}};
    const BenchSpec spec = parse_bench_config(doc);
    REQUIRE(spec.datasets.size() == 1);
    CHECK_FALSE(spec.datasets[0].name.empty());
    CHECK_FALSE(spec.datasets[0].csv_path.empty());
    CHECK_FALSE(spec.datasets[0].label_column.empty());
  }
  CHECK(seen == 7);
}
