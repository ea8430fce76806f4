#pragma once

#include <stdexcept>
#include <string>

namespace blex {

// Shape or width disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A softmax row with no admissible position.
class InvalidMaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Caller broke a documented precondition (non-scalar loss, missing gradient, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN or Inf reached a place that must stay finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonDeterministicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents or unreadable paths.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// User-supplied configuration or data that fails validation.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A statistic that is not defined for the given input (e.g. correlation of a constant).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace blex
