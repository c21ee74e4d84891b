#pragma once

#include <stdexcept>
#include <string>

namespace diffcore {

// A caller broke a documented precondition (shape mismatch, bad range, ...).
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// Arithmetic went bad: non-finite values, zero norms, diverging iterations.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A training loop failed (e.g. loss became NaN at some step).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace diffcore
