#ifndef OFFPOLICY_ERRORS_HPP_
#define OFFPOLICY_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace offpolicy {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf loss, zero-probability ratio denominators and similar.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed corpus records, bad checkpoints, out-of-range configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace offpolicy

#endif  // OFFPOLICY_ERRORS_HPP_
