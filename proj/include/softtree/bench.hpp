#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <initializer_list>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "softtree/cart.hpp"
#include "softtree/csv.hpp"
#include "softtree/dataset.hpp"
#include "softtree/errors.hpp"
#include "softtree/forward.hpp"
#include "softtree/logreg.hpp"
#include "softtree/metrics.hpp"
#include "softtree/model_io.hpp"
#include "softtree/preprocess.hpp"
#include "softtree/synth.hpp"
#include "softtree/trainer.hpp"
#include "softtree/tree.hpp"

namespace softtree {

// ============================================================================
// Methods and hyperparameters
// ============================================================================

enum class Method { kDt, kLr, kSdt, kSmSdt };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kDt: return "DT";
    case Method::kLr: return "LR";
    case Method::kSdt: return "SDT";
    case Method::kSmSdt: return "SMSDT";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  if (name == "DT") return Method::kDt;
  if (name == "LR") return Method::kLr;
  if (name == "SDT") return Method::kSdt;
  if (name == "SMSDT") return Method::kSmSdt;
  throw ConfigError("unknown method '" + name + "' (expected DT, LR, SDT, SMSDT)");
}

// Fully resolved per-method hyperparameters.
struct HyperParams {
  std::size_t depth = 3;       // DT, SDT, SMSDT
  double lambda = 0.1;         // SDT, SMSDT
  std::size_t epochs = 200;    // LR, SDT, SMSDT
  std::size_t batch_size = 128;
  double lr = 0.01;
  double l2 = 1e-4;            // LR
  std::size_t hidden_dim = 0;  // SMSDT; 0 = min(d, 32)
  double beta = 1.0;           // SDT, SMSDT
};

// Sparse overlay on HyperParams.
struct HyperOverrides {
  std::optional<std::size_t> depth, epochs, batch_size, hidden_dim;
  std::optional<double> lambda, lr, l2, beta;

  void apply(HyperParams& hp) const {
    if (depth) hp.depth = *depth;
    if (epochs) hp.epochs = *epochs;
    if (batch_size) hp.batch_size = *batch_size;
    if (hidden_dim) hp.hidden_dim = *hidden_dim;
    if (lambda) hp.lambda = *lambda;
    if (lr) hp.lr = *lr;
    if (l2) hp.l2 = *l2;
    if (beta) hp.beta = *beta;
  }
};

// ============================================================================
// Bench specification
// ============================================================================

// One benchmark dataset: either a CSV on disk or a synthetic spec that is
// regenerated with a fresh seed for every repeat.
struct DatasetRef {
  std::string name;
  std::string csv_path;  // empty for synthetic refs
  std::string label_column;
  std::string positive_label;
  std::vector<std::string> drop_columns;
  std::optional<SynthSpec> synth;
};

struct BenchSpec {
  std::vector<DatasetRef> datasets;
  std::vector<Method> methods{Method::kDt, Method::kLr, Method::kSdt,
                              Method::kSmSdt};
  std::size_t repeats = 5;
  std::uint64_t base_seed = 0;
  double train_frac = 0.8;
  HyperOverrides defaults;                   // applied to every method
  std::map<Method, HyperOverrides> per_method;  // applied on top of defaults

  void validate() const {
    if (datasets.empty()) throw ConfigError("bench: no datasets");
    if (methods.empty()) throw ConfigError("bench: no methods");
    if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
    if (!(train_frac > 0.0 && train_frac < 1.0))
      throw ConfigError("bench: train_frac must lie strictly between 0 and 1");
    for (std::size_t i = 0; i < datasets.size(); ++i) {
      const DatasetRef& ref = datasets[i];
      const std::string at = "datasets[" + std::to_string(i) + "]";
      if (ref.name.empty()) throw ConfigError("bench: " + at + " has no name");
      if (ref.csv_path.empty() == !ref.synth.has_value())
        throw ConfigError("bench: " + at + " needs exactly one of csv or synth");
      if (!ref.csv_path.empty() && ref.label_column.empty())
        throw ConfigError("bench: " + at + " needs a label_column");
      if (ref.synth) ref.synth->validate();
      for (std::size_t j = 0; j < i; ++j)
        if (datasets[j].name == ref.name)
          throw ConfigError("bench: duplicate dataset name '" + ref.name + "'");
    }
    for (std::size_t i = 0; i < methods.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (methods[j] == methods[i])
          throw ConfigError("bench: duplicate method " + method_name(methods[i]));
  }

  HyperParams resolve(Method m) const {
    HyperParams hp;
    defaults.apply(hp);
    if (const auto it = per_method.find(m); it != per_method.end())
      it->second.apply(hp);
    return hp;
  }
};

struct BenchRow {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;   // per-cell seed: base_seed * 1000 + repeat
  double auc = 0.0;         // NaN when error is non-empty
  double wall_time_s = 0.0;
  std::string error;
};

struct BenchResult {
  std::vector<BenchRow> rows;              // sorted by (dataset, method, seed)
  std::vector<std::string> dataset_order;  // spec order, for the aggregate table
  std::vector<Method> method_order;
};

// ============================================================================
// Seed streams
// ============================================================================

namespace detail {

// Distinct stream for epoch shuffling, so it never collides with the
// parameter-init stream that uses the cell seed directly.
constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::size_t bench_threads(std::size_t n_cells) {
  std::size_t limit = std::max<std::size_t>(std::thread::hardware_concurrency(), 1);
  if (const char* env = std::getenv("SOFTTREE_THREADS")) {
    std::size_t parsed = 0;
    const auto* last = env + std::string_view(env).size();
    const auto [ptr, ec] = std::from_chars(env, last, parsed);
    if (ec != std::errc{} || ptr != last || parsed < 1)
      throw ConfigError("SOFTTREE_THREADS must be a positive integer");
    limit = parsed;
  }
  return std::max<std::size_t>(std::min(limit, n_cells), 1);
}

}  // namespace detail

// ============================================================================
// Scoring one cell
// ============================================================================

namespace detail {

// Positive-class test scores for one trained method.
inline std::vector<double> cell_scores(Method method, const HyperParams& hp,
                                       const Matrix& x_train,
                                       const std::vector<int>& y_train,
                                       const Matrix& x_test,
                                       std::uint64_t seed_cell) {
  std::vector<double> scores(x_test.rows());
  switch (method) {
    case Method::kDt: {
      const CartTree tree = cart_fit(x_train, y_train, hp.depth);
      const Matrix proba = cart_predict_proba(tree, x_test);
      if (proba.cols() < 2) throw InputError("bench: single-class training data");
      for (std::size_t r = 0; r < x_test.rows(); ++r) scores[r] = proba(r, 1);
      return scores;
    }
    case Method::kLr: {
      TrainConfig tc;
      tc.epochs = hp.epochs;
      tc.batch_size = hp.batch_size;
      tc.learning_rate = hp.lr;
      tc.shuffle_seed = seed_cell ^ kShuffleStream;
      const LogRegModel model = logreg_fit(x_train, y_train, hp.l2, tc);
      return logreg_predict_proba(model, x_test);
    }
    case Method::kSdt:
    case Method::kSmSdt: {
      TreeConfig cfg;
      cfg.depth = hp.depth;
      cfg.input_dim = x_train.cols();
      cfg.n_classes = 2;
      cfg.variant = method == Method::kSdt ? Variant::kSdt : Variant::kSmSdt;
      cfg.hidden_dim = hp.hidden_dim;
      cfg.beta = hp.beta;
      cfg.lambda = hp.lambda;
      cfg.seed = seed_cell;
      TrainConfig tc;
      tc.epochs = hp.epochs;
      tc.batch_size = hp.batch_size;
      tc.learning_rate = hp.lr;
      tc.shuffle_seed = seed_cell ^ kShuffleStream;
      tc.history_every = hp.epochs;  // bench needs no curve, keep records sparse
      Dataset train_set;
      train_set.X = x_train;
      train_set.y = y_train;
      auto [tree, history] = train(init_tree(cfg), train_set, tc);
      (void)history;
      const PredictResult pred = predict_batch(tree, x_test);
      for (std::size_t r = 0; r < x_test.rows(); ++r) scores[r] = pred.proba(r, 1);
      return scores;
    }
  }
  throw ConfigError("bench: unhandled method");
}

}  // namespace detail

// ============================================================================
// run_bench
// ============================================================================

// Grid run over datasets x methods x repeats. Per cell: seed = base_seed*1000
// + repeat; stratified split; standardizer fit on the training side; method
// trained and scored by test ROC-AUC. Synthetic datasets are regenerated per
// repeat (seed mixed with the dataset name so different synthetic refs draw
// different data). Failures land in the row's error column and the run
// continues. Cells run on a pool capped by SOFTTREE_THREADS; output order is
// independent of scheduling.
inline BenchResult run_bench(const BenchSpec& spec) {
  spec.validate();

  // Load each CSV-backed dataset once, up front.
  std::map<std::string, std::shared_ptr<const Dataset>> csv_data;
  std::map<std::string, std::string> csv_errors;
  for (const DatasetRef& ref : spec.datasets) {
    if (ref.csv_path.empty()) continue;
    try {
      csv_data[ref.name] = std::make_shared<Dataset>(load_csv(
          ref.csv_path, ref.label_column, ref.positive_label, ref.drop_columns));
    } catch (const std::exception& e) {
      csv_errors[ref.name] = e.what();
    }
  }

  struct Cell {
    const DatasetRef* ref;
    Method method;
    std::size_t repeat;
  };
  std::vector<Cell> cells;
  for (const DatasetRef& ref : spec.datasets)
    for (const Method method : spec.methods)
      for (std::size_t r = 0; r < spec.repeats; ++r)
        cells.push_back({&ref, method, r});

  BenchResult result;
  result.rows.resize(cells.size());
  for (const auto& ref : spec.datasets) result.dataset_order.push_back(ref.name);
  result.method_order = spec.methods;

  const auto run_cell = [&](const Cell& cell, BenchRow& row) {
    const std::uint64_t seed_cell = spec.base_seed * 1000 + cell.repeat;
    row.dataset = cell.ref->name;
    row.method = method_name(cell.method);
    row.seed = seed_cell;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      Dataset synth_data;
      const Dataset* data = nullptr;
      if (cell.ref->synth) {
        SynthSpec sspec = *cell.ref->synth;
        sspec.seed = seed_cell ^ detail::fnv1a64(cell.ref->name);
        synth_data = make_synth(sspec);
        data = &synth_data;
      } else if (const auto it = csv_errors.find(cell.ref->name);
                 it != csv_errors.end()) {
        throw IoError(it->second);
      } else {
        data = csv_data.at(cell.ref->name).get();
      }

      auto [train_set, test_set] = split(*data, spec.train_frac, seed_cell);
      const Standardizer std_fit = fit_standardizer(train_set.X);
      const Matrix x_train = apply_standardizer(std_fit, train_set.X);
      const Matrix x_test = apply_standardizer(std_fit, test_set.X);

      const HyperParams hp = spec.resolve(cell.method);
      const auto scores = detail::cell_scores(cell.method, hp, x_train,
                                              train_set.y, x_test, seed_cell);
      row.auc = roc_auc(scores, test_set.y).auc;
    } catch (const std::exception& e) {
      row.auc = std::numeric_limits<double>::quiet_NaN();
      row.error = e.what();
    }
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  };

  const std::size_t n_threads = detail::bench_threads(cells.size());
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      run_cell(cells[i], result.rows[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cells.size()) return;
          run_cell(cells[i], result.rows[i]);
        }
      });
    for (auto& th : pool) th.join();
  }

  std::sort(result.rows.begin(), result.rows.end(),
            [](const BenchRow& a, const BenchRow& b) {
              return std::tie(a.dataset, a.method, a.seed) <
                     std::tie(b.dataset, b.method, b.seed);
            });
  return result;
}

// ============================================================================
// Result rendering
// ============================================================================

// CSV of all rows. AUC uses shortest round-trip formatting so reruns are
// byte-identical; wall_time_s is the only non-deterministic column.
inline std::string rows_csv(const BenchResult& result) {
  std::ostringstream out;
  out << "dataset,method,seed,auc,wall_time_s,error\n";
  for (const BenchRow& row : result.rows) {
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", row.wall_time_s);
    out << detail::csv_escape(row.dataset) << ',' << row.method << ',' << row.seed
        << ',' << detail::format_double(row.auc) << ',' << wall << ','
        << detail::csv_escape(row.error) << '\n';
  }
  return out.str();
}

// Markdown table of mean AUC per (dataset, method) plus a per-method grand
// average, datasets and methods in spec order.
inline std::string aggregate_markdown(const BenchResult& result) {
  std::map<std::string, std::map<std::string, std::vector<double>>> by_cell;
  for (const BenchRow& row : result.rows)
    if (row.error.empty()) by_cell[row.dataset][row.method].push_back(row.auc);

  const auto fmt_mean = [](const std::vector<double>& v) -> std::string {
    if (v.empty()) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", aggregate(v).mean);
    return buf;
  };

  std::ostringstream out;
  out << "| Dataset |";
  for (const Method m : result.method_order) out << ' ' << method_name(m) << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < result.method_order.size(); ++i) out << "---|";
  out << '\n';

  std::map<std::string, std::vector<double>> method_means;
  for (const std::string& ds : result.dataset_order) {
    out << "| " << ds << " |";
    for (const Method m : result.method_order) {
      const auto& vals = by_cell[ds][method_name(m)];
      out << ' ' << fmt_mean(vals) << " |";
      if (!vals.empty()) method_means[method_name(m)].push_back(aggregate(vals).mean);
    }
    out << '\n';
  }
  out << "| Average |";
  for (const Method m : result.method_order)
    out << ' ' << fmt_mean(method_means[method_name(m)]) << " |";
  out << '\n';
  return out.str();
}

// ============================================================================
// Config parsing
// ============================================================================

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<std::string_view> allowed,
                       const std::string& path) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto a : allowed) ok = ok || key == a;
    if (!ok)
      throw SchemaError("bench config: unknown key '" + key + "' at " + path);
  }
}

inline HyperOverrides parse_overrides(const nlohmann::json& j,
                                      const std::string& path) {
  check_keys(j, {"depth", "lambda", "epochs", "batch_size", "lr", "l2",
                 "hidden_dim", "beta"},
             path);
  HyperOverrides ov;
  const auto err = [&](const char* key) {
    return SchemaError("bench config: key '" + std::string(key) + "' at " + path +
                       " has the wrong type");
  };
  try {
    if (j.contains("depth")) ov.depth = j["depth"].get<std::size_t>();
    if (j.contains("epochs")) ov.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("batch_size")) ov.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("hidden_dim")) ov.hidden_dim = j["hidden_dim"].get<std::size_t>();
    if (j.contains("lambda")) ov.lambda = j["lambda"].get<double>();
    if (j.contains("lr")) ov.lr = j["lr"].get<double>();
    if (j.contains("l2")) ov.l2 = j["l2"].get<double>();
    if (j.contains("beta")) ov.beta = j["beta"].get<double>();
  } catch (const nlohmann::json::exception&) {
    throw err("?");
  }
  return ov;
}

inline DatasetRef parse_dataset_ref(const nlohmann::json& entry,
                                    const std::string& path) {
  check_keys(entry,
             {"name", "csv", "label_column", "positive_label", "drop_columns",
              "synth", "config", "notes"},
             path);
  DatasetRef ref;

  // Start from a pointed-to dataset config file, if any; inline keys win.
  nlohmann::json merged = nlohmann::json::object();
  if (entry.contains("config")) {
    if (!entry["config"].is_string())
      throw SchemaError("bench config: 'config' at " + path + " must be a path");
    const auto file = load_json_file(entry["config"].get<std::string>());
    check_keys(file,
               {"name", "csv", "label_column", "positive_label", "drop_columns",
                "notes"},
               entry["config"].get<std::string>());
    merged = file;
  }
  for (const auto& [key, value] : entry.items())
    if (key != "config") merged[key] = value;

  try {
    if (merged.contains("name")) ref.name = merged["name"].get<std::string>();
    if (merged.contains("csv")) ref.csv_path = merged["csv"].get<std::string>();
    if (merged.contains("label_column"))
      ref.label_column = merged["label_column"].get<std::string>();
    if (merged.contains("positive_label"))
      ref.positive_label = merged["positive_label"].get<std::string>();
    if (merged.contains("drop_columns"))
      ref.drop_columns = merged["drop_columns"].get<std::vector<std::string>>();
    if (merged.contains("synth")) {
      const auto& js = merged["synth"];
      check_keys(js,
                 {"n_samples", "n_features", "n_informative", "class_sep",
                  "flip_y"},
                 path + ".synth");
      SynthSpec ss;
      if (js.contains("n_samples")) ss.n_samples = js["n_samples"].get<std::size_t>();
      if (js.contains("n_features"))
        ss.n_features = js["n_features"].get<std::size_t>();
      if (js.contains("n_informative"))
        ss.n_informative = js["n_informative"].get<std::size_t>();
      if (js.contains("class_sep")) ss.class_sep = js["class_sep"].get<double>();
      if (js.contains("flip_y")) ss.flip_y = js["flip_y"].get<double>();
      ref.synth = ss;
    }
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("bench config: wrong field type at " + path);
  }
  return ref;
}

}  // namespace detail

// Parse a bench config document. Unknown keys anywhere are schema errors
// naming the offending field path. Dataset entries either spell out the CSV
// fields, reference a dataset config file via "config", or carry a "synth"
// block.
inline BenchSpec parse_bench_config(const nlohmann::json& doc) {
  detail::check_keys(doc,
                     {"base_seed", "repeats", "train_frac", "methods", "datasets",
                      "defaults", "overrides"},
                     "(top level)");
  BenchSpec spec;
  try {
    if (doc.contains("base_seed")) spec.base_seed = doc["base_seed"].get<std::uint64_t>();
    if (doc.contains("repeats")) spec.repeats = doc["repeats"].get<std::size_t>();
    if (doc.contains("train_frac")) spec.train_frac = doc["train_frac"].get<double>();
    if (doc.contains("methods")) {
      spec.methods.clear();
      for (const auto& m : doc["methods"])
        spec.methods.push_back(parse_method(m.get<std::string>()));
    }
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("bench config: wrong field type at (top level)");
  }
  if (doc.contains("datasets")) {
    if (!doc["datasets"].is_array())
      throw SchemaError("bench config: 'datasets' must be an array");
    for (std::size_t i = 0; i < doc["datasets"].size(); ++i)
      spec.datasets.push_back(detail::parse_dataset_ref(
          doc["datasets"][i], "datasets[" + std::to_string(i) + "]"));
  }
  if (doc.contains("defaults"))
    spec.defaults = detail::parse_overrides(doc["defaults"], "defaults");
  if (doc.contains("overrides")) {
    for (const auto& [key, value] : doc["overrides"].items())
      spec.per_method[parse_method(key)] =
          detail::parse_overrides(value, "overrides." + key);
  }
  return spec;
}

}  // namespace softtree
