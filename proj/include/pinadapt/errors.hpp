#pragma once

#include <stdexcept>
#include <string>

namespace pinadapt {

/// Input or configuration violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The selected backend cannot perform the requested operation.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An on-disk artifact could not be read back.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimization diverged (non-finite loss or parameters).
class OptimizationError : public std::runtime_error {
 public:
  OptimizationError(const std::string& what, long iteration, long source_index = -1)
      : std::runtime_error(what), iteration_(iteration), source_index_(source_index) {}

  long iteration() const noexcept { return iteration_; }
  long source_index() const noexcept { return source_index_; }

 private:
  long iteration_;
  long source_index_;
};

}  // namespace pinadapt
