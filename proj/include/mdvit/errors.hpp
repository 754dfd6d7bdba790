#pragma once

#include <stdexcept>
#include <string>

namespace mdvit {

// Malformed input text (config file, split file, checkpoint header).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A config value violates a documented invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or image dimensions are inconsistent with the model.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (missing domain label,
// unbalanced batch, out-of-range probabilities, ...).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset or checkpoint IO failure.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mdvit
