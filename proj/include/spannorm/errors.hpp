#pragma once

#include <stdexcept>
#include <string>

namespace spannorm {

// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition (stale cache, wrong layer, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad user data such as an out-of-range token id.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input outside a model's domain of validity (e.g. sigma <= 1).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input whose result is undefined, such as a zero median eigenvalue.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spannorm
