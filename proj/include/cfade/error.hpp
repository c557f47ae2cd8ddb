#pragma once

#include <stdexcept>
#include <string>

namespace cfade {

/// Input or configuration violates a documented contract (bad file, bad
/// value, unknown column). Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model or estimand cannot be computed from otherwise valid input
/// (single-class arm, empty support, unstable bootstrap). Exit code 2.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfade
