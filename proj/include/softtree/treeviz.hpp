#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "softtree/dataset.hpp"
#include "softtree/errors.hpp"
#include "softtree/forward.hpp"
#include "softtree/model_io.hpp"
#include "softtree/trainer.hpp"
#include "softtree/tree.hpp"

namespace softtree {

// ============================================================================
// Gate statistics over a dataset
// ============================================================================

struct GateTrace {
  std::vector<double> mean_gate;     // per inner node: dataset-mean gate value
  std::vector<double> arrival_mass;  // per inner node: mean arrival probability
  std::vector<double> leaf_mass;     // per leaf: mean path probability
  Matrix leaf_dist;                  // per leaf: softmax(phi), L x C
};

inline GateTrace gate_trace(const SoftTree& tree, const Matrix& x) {
  if (x.rows() == 0) throw InputError("gate_trace: empty input");
  if (x.cols() != tree.config.input_dim)
    throw InputError("gate_trace: input has " + std::to_string(x.cols()) +
                     " features, tree expects " +
                     std::to_string(tree.config.input_dim));

  const std::size_t m = tree.config.n_inner();
  const std::size_t L = tree.config.n_leaves();
  const std::size_t n = x.rows();

  GateTrace trace;
  trace.mean_gate.assign(m, 0.0);
  trace.arrival_mass.assign(m, 0.0);
  trace.leaf_mass.assign(L, 0.0);
  detail::GateState st;
  for (std::size_t r = 0; r < n; ++r) {
    detail::forward_gates(tree, x.row(r), st);
    for (std::size_t i = 0; i < m; ++i) {
      trace.mean_gate[i] += st.gates[i];
      trace.arrival_mass[i] += st.arrival[i];
    }
    for (std::size_t l = 0; l < L; ++l) trace.leaf_mass[l] += st.arrival[m + l];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : trace.mean_gate) v *= inv;
  for (auto& v : trace.arrival_mass) v *= inv;
  for (auto& v : trace.leaf_mass) v *= inv;
  trace.leaf_dist = leaf_distributions(tree);
  return trace;
}

// ============================================================================
// DOT export
// ============================================================================

namespace detail {

inline std::string fmt_double(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '\\' || ch == '"') out.push_back('\\');
    out.push_back(ch);
  }
  return out;
}

// Indices of the top_k largest |w|, magnitude-descending, ties by lower index.
inline std::vector<std::size_t> top_weights(const std::vector<double>& w,
                                            std::size_t top_k) {
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(w[a]) > std::fabs(w[b]);
  });
  idx.resize(std::min(top_k, idx.size()));
  return idx;
}

}  // namespace detail

// Graphviz DOT text for the tree: one box per inner node listing the top_k
// gate weights by magnitude plus the dataset-mean gate value and arrival
// mass, one ellipse per leaf with its mean path probability and class
// distribution, and L/R-labeled edges. SM-SDT gate weights act on the node
// layer output and the ancestor gates, so their labels use the synthetic
// names h0..h(H-1), parent, grandparent.
inline std::string export_dot(const SoftTree& tree, const GateTrace& trace,
                              const std::vector<std::string>& feature_names,
                              std::size_t top_k = 3) {
  const TreeConfig& cfg = tree.config;
  const std::size_t m = cfg.n_inner();
  const std::size_t L = cfg.n_leaves();
  if (feature_names.size() != cfg.input_dim)
    throw InputError("export_dot: " + std::to_string(feature_names.size()) +
                     " feature names for " + std::to_string(cfg.input_dim) +
                     " features");
  if (trace.mean_gate.size() != m || trace.leaf_mass.size() != L)
    throw InputError("export_dot: trace does not match the tree");

  std::vector<std::string> gate_names;
  if (cfg.variant == Variant::kSmSdt) {
    for (std::size_t r = 0; r < cfg.resolved_hidden(); ++r)
      gate_names.push_back("h" + std::to_string(r));
    gate_names.push_back("parent");
    gate_names.push_back("grandparent");
  } else {
    gate_names = feature_names;
  }

  std::ostringstream out;
  out << "// Soft decision tree visualization.\n"
         "// Gate weights are in standardized-feature units; gate value g is\n"
         "// the probability of routing RIGHT (edge label R); 1-g routes left (L).\n"
         "digraph softtree {\n"
         "  node [shape=box, fontname=\"Helvetica\"];\n";

  for (std::size_t i = 0; i < m; ++i) {
    std::string label = "n" + std::to_string(i);
    for (std::size_t k : detail::top_weights(tree.inner[i].w, top_k)) {
      label += "\\n" + detail::dot_escape(gate_names[k]) + " " +
               detail::fmt_double("%+.4g", tree.inner[i].w[k]);
    }
    label += "\\ng=" + detail::fmt_double("%.3f", trace.mean_gate[i]) +
             " mass=" + detail::fmt_double("%.3f", trace.arrival_mass[i]);
    out << "  n" << i << " [label=\"" << label << "\"];\n";
  }
  for (std::size_t l = 0; l < L; ++l) {
    std::string label = "leaf " + std::to_string(l) + "\\nP=" +
                        detail::fmt_double("%.3f", trace.leaf_mass[l]) + "\\n";
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      if (c) label += "/";
      label += detail::fmt_double("%.3f", trace.leaf_dist(l, c));
    }
    out << "  l" << l << " [label=\"" << label << "\", shape=ellipse];\n";
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto child_id = [&](std::size_t pos) {
      return pos < m ? "n" + std::to_string(pos) : "l" + std::to_string(pos - m);
    };
    out << "  n" << i << " -> " << child_id(left_child(i)) << " [label=\"L\"];\n";
    out << "  n" << i << " -> " << child_id(right_child(i)) << " [label=\"R\"];\n";
  }
  out << "}\n";
  return out.str();
}

// ============================================================================
// Training history <-> JSON lines
// ============================================================================

inline nlohmann::json history_record_to_json(const HistoryRecord& rec) {
  nlohmann::json doc{{"epoch", rec.epoch},
                     {"loss",
                      {{"total", rec.loss.total},
                       {"data", rec.loss.data_term},
                       {"penalty", rec.loss.penalty_term}}},
                     {"alpha", rec.alpha}};
  doc["val_auc"] = rec.val_auc ? nlohmann::json(*rec.val_auc) : nlohmann::json();
  if (rec.snapshot) doc["snapshot"] = tree_to_json(*rec.snapshot);
  return doc;
}

inline HistoryRecord history_record_from_json(const nlohmann::json& doc) {
  using detail::jas;
  using detail::jget;
  const std::string ctx = "history record";
  HistoryRecord rec;
  rec.epoch = jas<std::size_t>(doc, "epoch", ctx);
  const auto& loss = jget(doc, "loss", ctx);
  rec.loss.total = jas<double>(loss, "total", ctx + ".loss");
  rec.loss.data_term = jas<double>(loss, "data", ctx + ".loss");
  rec.loss.penalty_term = jas<double>(loss, "penalty", ctx + ".loss");
  rec.alpha = jas<std::vector<double>>(doc, "alpha", ctx);
  const auto& val = jget(doc, "val_auc", ctx);
  if (!val.is_null()) rec.val_auc = val.get<double>();
  if (doc.contains("snapshot")) rec.snapshot = tree_from_json(doc["snapshot"]);
  return rec;
}

// One JSON object per recorded epoch; full-precision floats, so the
// round-trip through read_history is lossless.
inline void export_history(const TrainHistory& history, const std::string& path) {
  if (history.records.empty()) throw InputError("export_history: empty history");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& rec : history.records)
    out << history_record_to_json(rec).dump() << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline TrainHistory read_history(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  TrainHistory history;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded())
      throw SchemaError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    history.records.push_back(history_record_from_json(doc));
  }
  return history;
}

}  // namespace softtree
