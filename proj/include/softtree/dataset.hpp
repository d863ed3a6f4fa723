#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "softtree/matrix.hpp"

namespace softtree {

// A fully numeric, label-binarized table ready for training. y holds 0/1 for
// every bundled experiment; multiclass labels are permitted by the model code
// but never produced by the loaders.
struct Dataset {
  Matrix X;
  std::vector<int> y;
  std::vector<std::string> feature_names;
  std::string positive_label;  // original label value that was mapped to 1
  std::string source;          // provenance note

  std::size_t size() const { return X.rows(); }
  std::size_t dim() const { return X.cols(); }
};

}  // namespace softtree
