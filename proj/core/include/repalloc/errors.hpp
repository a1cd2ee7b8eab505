#pragma once

#include <stdexcept>
#include <string>

namespace repalloc {

// A well-posed problem was given constraints that cannot be met
// (e.g. a spend target below the minimal feasible spend).
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

// An iterative solve exhausted its iteration or bracket budget.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace repalloc
