#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "softtree/cart.hpp"
#include "softtree/errors.hpp"
#include "softtree/logreg.hpp"
#include "softtree/matrix.hpp"
#include "softtree/preprocess.hpp"
#include "softtree/tree.hpp"

namespace softtree {
namespace detail {

using nlohmann::json;

inline const json& jget(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object()) throw SchemaError(ctx + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(ctx + ": missing key '" + key + "'");
  return *it;
}

template <typename T>
T jas(const json& j, const char* key, const std::string& ctx) {
  try {
    return jget(j, key, ctx).get<T>();
  } catch (const json::exception&) {
    throw SchemaError(ctx + ": key '" + key + "' has the wrong type");
  }
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw SchemaError(ctx + ": expected an array of rows");
  Matrix m;
  for (std::size_t r = 0; r < j.size(); ++r) {
    const json& row = j[r];
    if (!row.is_array()) throw SchemaError(ctx + ": row " + std::to_string(r) +
                                           " is not an array");
    if (r == 0) m = Matrix(j.size(), row.size());
    if (row.size() != m.cols())
      throw SchemaError(ctx + ": ragged rows");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!row[c].is_number()) throw SchemaError(ctx + ": non-numeric entry");
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

}  // namespace detail

// ============================================================================
// Soft tree <-> JSON
// ============================================================================

inline nlohmann::json tree_to_json(const SoftTree& tree) {
  using nlohmann::json;
  const TreeConfig& cfg = tree.config;
  json doc;
  doc["model"] = "softtree";
  doc["config"] = {{"depth", cfg.depth},
                   {"input_dim", cfg.input_dim},
                   {"n_classes", cfg.n_classes},
                   {"variant", variant_name(cfg.variant)},
                   {"hidden_dim", cfg.hidden_dim},
                   {"beta", cfg.beta},
                   {"lambda", cfg.lambda},
                   {"seed", cfg.seed}};
  json inner = json::array();
  for (const auto& node : tree.inner) {
    json jn{{"w", node.w}, {"b", node.b}};
    if (cfg.variant == Variant::kSmSdt) {
      jn["layer_w"] = detail::matrix_to_json(node.layer_w);
      jn["layer_b"] = node.layer_b;
    }
    inner.push_back(std::move(jn));
  }
  doc["inner"] = std::move(inner);
  json leaves = json::array();
  for (const auto& leaf : tree.leaves) leaves.push_back(json{{"phi", leaf.phi}});
  doc["leaves"] = std::move(leaves);
  return doc;
}

inline SoftTree tree_from_json(const nlohmann::json& doc) {
  using detail::jas;
  using detail::jget;
  const std::string ctx = "softtree model";
  if (jas<std::string>(doc, "model", ctx) != "softtree")
    throw SchemaError(ctx + ": 'model' is not \"softtree\"");

  const auto& jc = jget(doc, "config", ctx);
  TreeConfig cfg;
  cfg.depth = jas<std::size_t>(jc, "depth", ctx + ".config");
  cfg.input_dim = jas<std::size_t>(jc, "input_dim", ctx + ".config");
  cfg.n_classes = jas<std::size_t>(jc, "n_classes", ctx + ".config");
  const auto variant = jas<std::string>(jc, "variant", ctx + ".config");
  if (variant == "SDT") {
    cfg.variant = Variant::kSdt;
  } else if (variant == "SMSDT") {
    cfg.variant = Variant::kSmSdt;
  } else {
    throw SchemaError(ctx + ".config: unknown variant '" + variant + "'");
  }
  cfg.hidden_dim = jas<std::size_t>(jc, "hidden_dim", ctx + ".config");
  cfg.beta = jas<double>(jc, "beta", ctx + ".config");
  cfg.lambda = jas<double>(jc, "lambda", ctx + ".config");
  cfg.seed = jas<std::uint64_t>(jc, "seed", ctx + ".config");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw SchemaError(ctx + ".config: " + e.what());
  }

  SoftTree tree;
  tree.config = cfg;
  const auto& jinner = jget(doc, "inner", ctx);
  if (!jinner.is_array() || jinner.size() != cfg.n_inner())
    throw SchemaError(ctx + ": 'inner' must hold " + std::to_string(cfg.n_inner()) +
                      " nodes");
  for (std::size_t i = 0; i < jinner.size(); ++i) {
    const std::string nctx = ctx + ".inner[" + std::to_string(i) + "]";
    InnerNode node;
    node.w = jas<std::vector<double>>(jinner[i], "w", nctx);
    node.b = jas<double>(jinner[i], "b", nctx);
    if (node.w.size() != cfg.gate_dim())
      throw SchemaError(nctx + ": gate weight length " +
                        std::to_string(node.w.size()) + ", expected " +
                        std::to_string(cfg.gate_dim()));
    if (cfg.variant == Variant::kSmSdt) {
      node.layer_w = detail::matrix_from_json(jget(jinner[i], "layer_w", nctx),
                                              nctx + ".layer_w");
      node.layer_b = jas<std::vector<double>>(jinner[i], "layer_b", nctx);
      if (node.layer_w.rows() != cfg.resolved_hidden() ||
          node.layer_w.cols() != cfg.input_dim ||
          node.layer_b.size() != cfg.resolved_hidden())
        throw SchemaError(nctx + ": node layer shape mismatch");
    }
    tree.inner.push_back(std::move(node));
  }

  const auto& jleaves = jget(doc, "leaves", ctx);
  if (!jleaves.is_array() || jleaves.size() != cfg.n_leaves())
    throw SchemaError(ctx + ": 'leaves' must hold " +
                      std::to_string(cfg.n_leaves()) + " nodes");
  for (std::size_t l = 0; l < jleaves.size(); ++l) {
    LeafNode leaf;
    leaf.phi = jas<std::vector<double>>(jleaves[l], "phi",
                                        ctx + ".leaves[" + std::to_string(l) + "]");
    if (leaf.phi.size() != cfg.n_classes)
      throw SchemaError(ctx + ".leaves[" + std::to_string(l) +
                        "]: phi length mismatch");
    tree.leaves.push_back(std::move(leaf));
  }
  return tree;
}

// ============================================================================
// Baselines <-> JSON (same envelope, different "model" tag)
// ============================================================================

inline nlohmann::json cart_to_json(const CartTree& tree) {
  using nlohmann::json;
  json nodes = json::array();
  for (const auto& node : tree.nodes)
    nodes.push_back(json{{"feature", node.feature},
                         {"threshold", node.threshold},
                         {"left", node.left},
                         {"right", node.right},
                         {"freq", node.freq}});
  return json{{"model", "cart"},
              {"n_classes", tree.n_classes},
              {"max_depth", tree.max_depth},
              {"nodes", std::move(nodes)}};
}

inline CartTree cart_from_json(const nlohmann::json& doc) {
  using detail::jas;
  using detail::jget;
  const std::string ctx = "cart model";
  if (jas<std::string>(doc, "model", ctx) != "cart")
    throw SchemaError(ctx + ": 'model' is not \"cart\"");
  CartTree tree;
  tree.n_classes = jas<std::size_t>(doc, "n_classes", ctx);
  tree.max_depth = jas<std::size_t>(doc, "max_depth", ctx);
  const auto& jnodes = jget(doc, "nodes", ctx);
  if (!jnodes.is_array() || jnodes.empty())
    throw SchemaError(ctx + ": 'nodes' must be a non-empty array");
  const auto n = static_cast<int>(jnodes.size());
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    const std::string nctx = ctx + ".nodes[" + std::to_string(i) + "]";
    CartNode node;
    node.feature = jas<int>(jnodes[i], "feature", nctx);
    node.threshold = jas<double>(jnodes[i], "threshold", nctx);
    node.left = jas<int>(jnodes[i], "left", nctx);
    node.right = jas<int>(jnodes[i], "right", nctx);
    node.freq = jas<std::vector<double>>(jnodes[i], "freq", nctx);
    const bool is_leaf = node.feature < 0;
    if (is_leaf && node.freq.size() != tree.n_classes)
      throw SchemaError(nctx + ": leaf frequency length mismatch");
    if (!is_leaf && (node.left < 0 || node.left >= n || node.right < 0 ||
                     node.right >= n))
      throw SchemaError(nctx + ": child index out of range");
    tree.nodes.push_back(std::move(node));
  }
  return tree;
}

inline nlohmann::json logreg_to_json(const LogRegModel& model) {
  return nlohmann::json{
      {"model", "logreg"}, {"w", model.w}, {"b", model.b}, {"l2", model.l2}};
}

inline LogRegModel logreg_from_json(const nlohmann::json& doc) {
  using detail::jas;
  const std::string ctx = "logreg model";
  if (jas<std::string>(doc, "model", ctx) != "logreg")
    throw SchemaError(ctx + ": 'model' is not \"logreg\"");
  LogRegModel model;
  model.w = jas<std::vector<double>>(doc, "w", ctx);
  model.b = jas<double>(doc, "b", ctx);
  model.l2 = jas<double>(doc, "l2", ctx);
  return model;
}

// ============================================================================
// Saved-model bundle (model + optional preprocessing context)
// ============================================================================

// What the CLI persists: one model plus the standardizer and feature names it
// was trained with, so evaluation and visualization reuse them.
struct ModelBundle {
  std::string kind;  // "softtree" | "cart" | "logreg"
  std::optional<SoftTree> tree;
  std::optional<CartTree> cart;
  std::optional<LogRegModel> logreg;
  std::optional<Standardizer> standardizer;
  std::vector<std::string> feature_names;
};

inline nlohmann::json bundle_to_json(const ModelBundle& bundle) {
  nlohmann::json doc;
  if (bundle.kind == "softtree" && bundle.tree) {
    doc = tree_to_json(*bundle.tree);
  } else if (bundle.kind == "cart" && bundle.cart) {
    doc = cart_to_json(*bundle.cart);
  } else if (bundle.kind == "logreg" && bundle.logreg) {
    doc = logreg_to_json(*bundle.logreg);
  } else {
    throw SchemaError("model bundle: kind/payload mismatch");
  }
  if (bundle.standardizer)
    doc["standardizer"] = {{"mean", bundle.standardizer->mean},
                           {"scale", bundle.standardizer->scale}};
  if (!bundle.feature_names.empty()) doc["feature_names"] = bundle.feature_names;
  return doc;
}

inline ModelBundle bundle_from_json(const nlohmann::json& doc) {
  using detail::jas;
  ModelBundle bundle;
  bundle.kind = jas<std::string>(doc, "model", "model document");
  if (bundle.kind == "softtree") {
    bundle.tree = tree_from_json(doc);
  } else if (bundle.kind == "cart") {
    bundle.cart = cart_from_json(doc);
  } else if (bundle.kind == "logreg") {
    bundle.logreg = logreg_from_json(doc);
  } else {
    throw SchemaError("model document: unknown model kind '" + bundle.kind + "'");
  }
  if (doc.contains("standardizer")) {
    Standardizer s;
    s.mean = jas<std::vector<double>>(doc["standardizer"], "mean",
                                      "model.standardizer");
    s.scale = jas<std::vector<double>>(doc["standardizer"], "scale",
                                       "model.standardizer");
    if (s.mean.size() != s.scale.size())
      throw SchemaError("model.standardizer: mean/scale length mismatch");
    bundle.standardizer = std::move(s);
  }
  if (doc.contains("feature_names"))
    bundle.feature_names =
        jas<std::vector<std::string>>(doc, "feature_names", "model document");
  return bundle;
}

// ============================================================================
// File round-trip
// ============================================================================

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  auto doc = nlohmann::json::parse(buf.str(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw SchemaError(path + ": invalid JSON");
  return doc;
}

inline void save_json_file(const nlohmann::json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline void save_model(const ModelBundle& bundle, const std::string& path) {
  save_json_file(bundle_to_json(bundle), path);
}

inline ModelBundle load_model(const std::string& path) {
  return bundle_from_json(load_json_file(path));
}

}  // namespace softtree
