#pragma once

#include <stdexcept>
#include <string>

namespace discprop {

// Malformed input file (bad TSV row, bad JSON record).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that violates a data invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AlignmentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Inconsistent configuration or checkpoint/model mismatch.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered in a loss or gradient.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace discprop
