#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "softtree/dataset.hpp"
#include "softtree/errors.hpp"
#include "softtree/matrix.hpp"
#include "softtree/rng.hpp"

namespace softtree {

struct SynthSpec {
  std::size_t n_samples = 1000;
  std::size_t n_features = 50;
  std::size_t n_informative = 30;
  double class_sep = 1.0;
  double flip_y = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_samples < 2) throw ConfigError("make_synth: need at least 2 samples");
    if (n_features < 1) throw ConfigError("make_synth: need at least 1 feature");
    if (n_informative < 1) throw ConfigError("make_synth: need at least 1 informative feature");
    if (n_informative > n_features)
      throw ConfigError("make_synth: n_informative exceeds n_features");
    if (!(class_sep > 0.0)) throw ConfigError("make_synth: class_sep must be positive");
    if (flip_y < 0.0 || flip_y >= 1.0)
      throw ConfigError("make_synth: flip_y must lie in [0, 1)");
  }
};

// Two-class hypercube generator. Class centers are two distinct random
// vertices of {-class_sep, +class_sep}^n_informative; samples are unit
// Gaussian clouds around their center, pushed through a shared random mixing
// matrix; the remaining columns are pure noise; labels flip independently
// with probability flip_y; finally the columns are shuffled. The Dataset's
// source field records the post-shuffle informative column indices as JSON.
inline Dataset make_synth(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_samples;
  const std::size_t d = spec.n_features;
  const std::size_t k = spec.n_informative;
  Rng rng(spec.seed);

  // (1) two distinct vertices of the signed hypercube
  std::vector<double> v0(k), v1(k);
  for (auto& v : v0) v = rng.below(2) == 0 ? -spec.class_sep : spec.class_sep;
  do {
    for (auto& v : v1) v = rng.below(2) == 0 ? -spec.class_sep : spec.class_sep;
  } while (v1 == v0);

  // (2) class clouds in the informative subspace: first floor(n/2) rows are
  // class 0, the rest class 1
  const std::size_t n0 = n / 2;
  Matrix raw(n, k);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    const bool cls1 = r >= n0;
    y[r] = cls1 ? 1 : 0;
    const auto& center = cls1 ? v1 : v0;
    auto row = raw.row(r);
    for (std::size_t c = 0; c < k; ++c) row[c] = center[c] + rng.normal();
  }

  // (3) shared random mixing of the informative block
  Matrix mix(k, k);
  for (auto& v : mix.storage()) v = rng.normal();
  Matrix pre(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto src = raw.row(r);
    auto dst = pre.row(r);
    for (std::size_t c = 0; c < k; ++c) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += src[t] * mix(t, c);
      dst[c] = acc;
    }
  }

  // (4) pure-noise columns
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = pre.row(r);
    for (std::size_t c = k; c < d; ++c) dst[c] = rng.normal();
  }

  // (5) label noise (uniforms drawn regardless of flip_y, so the downstream
  // stream does not depend on its value)
  for (std::size_t r = 0; r < n; ++r)
    if (rng.uniform01() < spec.flip_y) y[r] = 1 - y[r];

  // (6) column shuffle: pre-column j lands at position perm[j]
  const auto perm = rng.permutation(d);
  Dataset out;
  out.X = Matrix(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto src = pre.row(r);
    auto dst = out.X.row(r);
    for (std::size_t j = 0; j < d; ++j) dst[perm[j]] = src[j];
  }
  out.y = std::move(y);
  out.feature_names.resize(d);
  for (std::size_t j = 0; j < d; ++j) out.feature_names[j] = "f" + std::to_string(j);
  out.positive_label = "1";

  std::vector<std::size_t> informative(perm.begin(),
                                       perm.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(informative.begin(), informative.end());
  nlohmann::json prov{{"generator", "synth"},
                      {"n_samples", n},
                      {"n_features", d},
                      {"n_informative", k},
                      {"class_sep", spec.class_sep},
                      {"flip_y", spec.flip_y},
                      {"seed", spec.seed},
                      {"informative_columns", informative}};
  out.source = prov.dump();
  return out;
}

}  // namespace softtree
