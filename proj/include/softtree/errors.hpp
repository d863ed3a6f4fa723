#pragma once

#include <stdexcept>

namespace softtree {

// Invalid model or training configuration (bad depth, dims, hyperparameters).
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad runtime input: shape mismatch, non-finite values, empty batch,
// out-of-range labels, degenerate label sets.
class InputError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file content: CSV schema problems, invalid JSON documents.
class SchemaError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failure.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace softtree
