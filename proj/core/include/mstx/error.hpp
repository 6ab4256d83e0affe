#pragma once

#include <stdexcept>
#include <string>

namespace mstx {

// Invalid configuration: bad topology, malformed config keys, inconsistent
// hyperparameters. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with input data: missing files, misaligned corpora, vocab
// mismatches. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures: divergence, non-finite intermediates, failed gradient
// checks. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or axis violation in a tensor primitive.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace mstx
