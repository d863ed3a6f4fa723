// softtree: command-line front end for the soft-decision-tree library.
//
// Subcommands:
//   gen    synthesize a labeled CSV
//   train  fit a model on a CSV, write model JSON (+ training history)
//   eval   score a saved model on a CSV (test ROC-AUC)
//   viz    render a trained soft tree as Graphviz DOT
//   bench  run a datasets x methods x repeats grid, write rows CSV + table

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <softtree/softtree.hpp>

namespace {

using softtree::ConfigError;
using softtree::Dataset;
using softtree::InputError;
using softtree::IoError;

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

// Dataset selection shared by train/eval/viz: either --config pointing at a
// dataset config JSON, or --data plus the label flags; explicit flags win.
struct DataFlags {
  std::string config_path;
  std::string csv_path;
  std::string label_column;
  std::string positive_label;
  std::vector<std::string> drop_columns;

  void add_to(CLI::App& cmd, bool config_allowed = true) {
    if (config_allowed)
      cmd.add_option("--config", config_path,
                     "Dataset config JSON (name/csv/label_column/...)");
    cmd.add_option("--data", csv_path, "CSV file to load");
    cmd.add_option("--label-column", label_column, "Name of the label column");
    cmd.add_option("--positive-label", positive_label,
                   "Label value mapped to class 1 (all others to 0)");
    cmd.add_option("--drop-columns", drop_columns,
                   "Columns to drop before featurization")
        ->delimiter(',');
  }

  Dataset load() const {
    softtree::DatasetRef ref;
    if (!config_path.empty()) {
      const nlohmann::json entry = {{"config", config_path}};
      ref = softtree::detail::parse_dataset_ref(entry, "--config");
    }
    if (!csv_path.empty()) ref.csv_path = csv_path;
    if (!label_column.empty()) ref.label_column = label_column;
    if (!positive_label.empty()) ref.positive_label = positive_label;
    if (!drop_columns.empty()) ref.drop_columns = drop_columns;
    if (ref.csv_path.empty())
      throw ConfigError("no dataset given (use --data or --config)");
    if (ref.label_column.empty())
      throw ConfigError("no label column given (use --label-column or --config)");
    return softtree::load_csv(ref.csv_path, ref.label_column, ref.positive_label,
                              ref.drop_columns);
  }
};

// Positive-class scores from any saved model kind.
std::vector<double> bundle_scores(const softtree::ModelBundle& bundle,
                                  const softtree::Matrix& x) {
  if (bundle.kind == "softtree") {
    const auto pred = softtree::predict_batch(*bundle.tree, x);
    if (pred.proba.cols() != 2)
      throw InputError("ROC-AUC needs a binary model; this tree has " +
                       std::to_string(pred.proba.cols()) + " classes");
    std::vector<double> s(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) s[r] = pred.proba(r, 1);
    return s;
  }
  if (bundle.kind == "cart") {
    const auto proba = softtree::cart_predict_proba(*bundle.cart, x);
    if (proba.cols() < 2) throw InputError("saved tree is single-class");
    std::vector<double> s(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) s[r] = proba(r, 1);
    return s;
  }
  if (bundle.kind == "logreg")
    return softtree::logreg_predict_proba(*bundle.logreg, x);
  throw InputError("unknown model kind '" + bundle.kind + "'");
}

softtree::Matrix standardized_features(const softtree::ModelBundle& bundle,
                                       const Dataset& data) {
  if (!bundle.feature_names.empty() &&
      bundle.feature_names != data.feature_names)
    throw InputError(
        "dataset feature columns do not match the ones the model was trained "
        "on");
  if (bundle.standardizer)
    return softtree::apply_standardizer(*bundle.standardizer, data.X);
  return data.X;
}

int cmd_gen(const softtree::SynthSpec& spec, const std::string& out_path) {
  const Dataset data = softtree::make_synth(spec);
  softtree::write_csv(data, out_path);
  std::printf("wrote %zu rows x %zu features to %s\n", data.size(), data.dim(),
              out_path.c_str());
  std::printf("%s\n", data.source.c_str());
  return 0;
}

struct TrainFlags {
  DataFlags data;
  std::string method = "SDT";
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::size_t depth = 3;
  double lambda = 0.1;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double lr = 0.01;
  double beta = 1.0;
  std::size_t hidden_dim = 0;
  double l2 = 1e-4;
  double val_fraction = 0.0;
  std::size_t history_every = 1;
};

int cmd_train(const TrainFlags& f) {
  const Dataset raw = f.data.load();
  int n_classes = 0;
  for (const int label : raw.y) n_classes = std::max(n_classes, label + 1);
  n_classes = std::max(n_classes, 2);

  softtree::ModelBundle bundle;
  bundle.standardizer = softtree::fit_standardizer(raw.X);
  bundle.feature_names = raw.feature_names;
  Dataset data = raw;
  data.X = softtree::apply_standardizer(*bundle.standardizer, raw.X);

  std::filesystem::create_directories(f.out_dir);
  const std::string model_path = f.out_dir + "/model.json";

  if (f.method == "DT") {
    bundle.kind = "cart";
    bundle.cart = softtree::cart_fit(data.X, data.y, f.depth);
    softtree::save_model(bundle, model_path);
    std::printf("wrote %s (%zu nodes)\n", model_path.c_str(),
                bundle.cart->nodes.size());
    return 0;
  }
  if (f.method == "LR") {
    softtree::TrainConfig tc;
    tc.epochs = f.epochs;
    tc.batch_size = f.batch_size;
    tc.learning_rate = f.lr;
    tc.shuffle_seed = f.seed ^ softtree::detail::kShuffleStream;
    bundle.kind = "logreg";
    bundle.logreg = softtree::logreg_fit(data.X, data.y, f.l2, tc);
    softtree::save_model(bundle, model_path);
    std::printf("wrote %s\n", model_path.c_str());
    return 0;
  }
  if (f.method != "SDT" && f.method != "SMSDT")
    throw ConfigError("unknown method '" + f.method +
                      "' (expected DT, LR, SDT, SMSDT)");

  softtree::TreeConfig cfg;
  cfg.depth = f.depth;
  cfg.input_dim = data.dim();
  cfg.n_classes = static_cast<std::size_t>(n_classes);
  cfg.variant =
      f.method == "SDT" ? softtree::Variant::kSdt : softtree::Variant::kSmSdt;
  cfg.hidden_dim = f.hidden_dim;
  cfg.beta = f.beta;
  cfg.lambda = f.lambda;
  cfg.seed = f.seed;

  softtree::TrainConfig tc;
  tc.epochs = f.epochs;
  tc.batch_size = f.batch_size;
  tc.learning_rate = f.lr;
  tc.shuffle_seed = f.seed ^ softtree::detail::kShuffleStream;
  tc.history_every = f.history_every;
  tc.val_fraction = f.val_fraction;

  auto [tree, history] = softtree::train(softtree::init_tree(cfg), data, tc);
  bundle.kind = "softtree";
  bundle.tree = std::move(tree);
  softtree::save_model(bundle, model_path);
  const std::string history_path = f.out_dir + "/history.jsonl";
  softtree::export_history(history, history_path);

  const auto& last = history.records.back();
  std::printf("wrote %s and %s\n", model_path.c_str(), history_path.c_str());
  std::printf("final loss %.6f (data %.6f, penalty %.6f)\n", last.loss.total,
              last.loss.data_term, last.loss.penalty_term);
  if (last.val_auc) std::printf("validation AUC %.6f\n", *last.val_auc);
  return 0;
}

int cmd_eval(const DataFlags& df, const std::string& model_path) {
  const softtree::ModelBundle bundle = softtree::load_model(model_path);
  const Dataset data = df.load();
  const softtree::Matrix x = standardized_features(bundle, data);
  const auto scores = bundle_scores(bundle, x);
  const auto res = softtree::roc_auc(scores, data.y);
  std::printf("AUC %.6f (n=%zu, pos=%zu, neg=%zu)\n", res.auc, data.size(),
              res.n_pos, res.n_neg);
  return 0;
}

int cmd_viz(const DataFlags& df, const std::string& model_path,
            const std::string& out_path, std::size_t top_k) {
  const softtree::ModelBundle bundle = softtree::load_model(model_path);
  if (bundle.kind != "softtree")
    throw InputError("viz needs a soft-tree model, got kind '" + bundle.kind +
                     "'");
  const Dataset data = df.load();
  const softtree::Matrix x = standardized_features(bundle, data);
  const auto trace = softtree::gate_trace(*bundle.tree, x);
  std::vector<std::string> names = bundle.feature_names;
  if (names.empty()) names = data.feature_names;
  const std::string dot =
      softtree::export_dot(*bundle.tree, trace, names, top_k);
  if (out_path.empty()) {
    std::fputs(dot.c_str(), stdout);
  } else {
    write_text_file(out_path, dot);
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

struct BenchFlags {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repeats;
  std::string methods;  // comma list
  std::optional<std::size_t> depth, epochs, batch_size;
  std::optional<double> lambda, lr;
};

int cmd_bench(const BenchFlags& f) {
  if (f.config_path.empty()) throw ConfigError("bench needs --config");
  softtree::BenchSpec spec =
      softtree::parse_bench_config(softtree::load_json_file(f.config_path));
  if (f.seed) spec.base_seed = *f.seed;
  if (f.repeats) spec.repeats = *f.repeats;
  if (!f.methods.empty()) {
    spec.methods.clear();
    std::stringstream ss(f.methods);
    for (std::string tok; std::getline(ss, tok, ',');)
      if (!tok.empty()) spec.methods.push_back(softtree::parse_method(tok));
  }
  if (f.depth) spec.defaults.depth = *f.depth;
  if (f.epochs) spec.defaults.epochs = *f.epochs;
  if (f.batch_size) spec.defaults.batch_size = *f.batch_size;
  if (f.lambda) spec.defaults.lambda = *f.lambda;
  if (f.lr) spec.defaults.lr = *f.lr;

  const softtree::BenchResult result = softtree::run_bench(spec);
  std::filesystem::create_directories(f.out_dir);
  const std::string rows_path = f.out_dir + "/rows.csv";
  const std::string table_path = f.out_dir + "/aggregate.md";
  write_text_file(rows_path, softtree::rows_csv(result));
  const std::string table = softtree::aggregate_markdown(result);
  write_text_file(table_path, table);

  std::size_t failures = 0;
  for (const auto& row : result.rows)
    if (!row.error.empty()) ++failures;
  std::printf("%s", table.c_str());
  std::printf("wrote %s and %s (%zu rows, %zu failed)\n", rows_path.c_str(),
              table_path.c_str(), result.rows.size(), failures);
  return failures == result.rows.size() && !result.rows.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft decision trees trained by gradient descent"};
  app.require_subcommand(1);

  // --- gen ---
  auto* gen = app.add_subcommand("gen", "Generate a synthetic labeled CSV");
  softtree::SynthSpec synth;
  std::string gen_out = "synth.csv";
  std::string gen_config;
  gen->add_option("--config", gen_config, "JSON with generator settings");
  gen->add_option("--out", gen_out, "Output CSV path");
  gen->add_option("--seed", synth.seed, "Generator seed");
  auto* g_n = gen->add_option("--n-samples", synth.n_samples, "Rows to draw");
  auto* g_d = gen->add_option("--n-features", synth.n_features, "Total features");
  auto* g_k =
      gen->add_option("--n-informative", synth.n_informative, "Informative features");
  auto* g_sep = gen->add_option("--class-sep", synth.class_sep,
                                "Distance between class centers");
  auto* g_flip = gen->add_option("--flip-y", synth.flip_y, "Label noise fraction");

  // --- train ---
  auto* train = app.add_subcommand("train", "Fit a model and save it as JSON");
  TrainFlags tf;
  tf.data.add_to(*train);
  train->add_option("--method", tf.method, "DT, LR, SDT, or SMSDT");
  train->add_option("--out", tf.out_dir, "Output directory");
  train->add_option("--seed", tf.seed, "Parameter-init / shuffle seed");
  train->add_option("--depth", tf.depth, "Tree depth");
  train->add_option("--lambda", tf.lambda, "Gate-balance penalty strength");
  train->add_option("--epochs", tf.epochs, "Training epochs");
  train->add_option("--batch-size", tf.batch_size, "Mini-batch size");
  train->add_option("--lr", tf.lr, "Adam learning rate");
  train->add_option("--beta", tf.beta, "Gate sharpness");
  train->add_option("--hidden-dim", tf.hidden_dim,
                    "Per-node hidden width (0 = auto)");
  train->add_option("--l2", tf.l2, "L2 strength (LR only)");
  train->add_option("--val-fraction", tf.val_fraction,
                    "Fraction carved out for validation AUC tracking");
  train->add_option("--history-every", tf.history_every,
                    "Record history every N epochs");

  // --- eval ---
  auto* eval = app.add_subcommand("eval", "ROC-AUC of a saved model on a CSV");
  DataFlags ef;
  std::string eval_model;
  ef.add_to(*eval);
  eval->add_option("--model", eval_model, "Model JSON path")->required();

  // --- viz ---
  auto* viz = app.add_subcommand("viz", "Export a soft tree as Graphviz DOT");
  DataFlags vf;
  std::string viz_model, viz_out;
  std::size_t viz_top_k = 3;
  vf.add_to(*viz);
  viz->add_option("--model", viz_model, "Model JSON path")->required();
  viz->add_option("--out", viz_out, "Output DOT path (stdout when omitted)");
  viz->add_option("--top-k", viz_top_k, "Features shown per gate");

  // --- bench ---
  auto* bench = app.add_subcommand("bench", "Run a benchmark grid");
  BenchFlags bf;
  bench->add_option("--config", bf.config_path, "Bench config JSON")->required();
  bench->add_option("--out", bf.out_dir, "Output directory");
  bench->add_option("--seed", bf.seed, "Base seed (cell seed = base*1000+r)");
  bench->add_option("--repeats", bf.repeats, "Repeats per cell");
  bench->add_option("--methods", bf.methods, "Comma list: DT,LR,SDT,SMSDT");
  bench->add_option("--depth", bf.depth, "Tree depth for all methods");
  bench->add_option("--lambda", bf.lambda, "Gate-balance penalty strength");
  bench->add_option("--epochs", bf.epochs, "Training epochs");
  bench->add_option("--batch-size", bf.batch_size, "Mini-batch size");
  bench->add_option("--lr", bf.lr, "Adam learning rate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      if (!gen_config.empty()) {
        const auto doc = softtree::load_json_file(gen_config);
        softtree::detail::check_keys(doc,
                                     {"n_samples", "n_features", "n_informative",
                                      "class_sep", "flip_y", "seed"},
                                     gen_config);
        softtree::SynthSpec from_file = synth;
        if (doc.contains("n_samples") && !*g_n)
          from_file.n_samples = doc["n_samples"].get<std::size_t>();
        if (doc.contains("n_features") && !*g_d)
          from_file.n_features = doc["n_features"].get<std::size_t>();
        if (doc.contains("n_informative") && !*g_k)
          from_file.n_informative = doc["n_informative"].get<std::size_t>();
        if (doc.contains("class_sep") && !*g_sep)
          from_file.class_sep = doc["class_sep"].get<double>();
        if (doc.contains("flip_y") && !*g_flip)
          from_file.flip_y = doc["flip_y"].get<double>();
        if (doc.contains("seed") && !gen->count("--seed"))
          from_file.seed = doc["seed"].get<std::uint64_t>();
        synth = from_file;
      }
      return cmd_gen(synth, gen_out);
    }
    if (*train) return cmd_train(tf);
    if (*eval) return cmd_eval(ef, eval_model);
    if (*viz) return cmd_viz(vf, viz_model, viz_out, viz_top_k);
    if (*bench) return cmd_bench(bf);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
