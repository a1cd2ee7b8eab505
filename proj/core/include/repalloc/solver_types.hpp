#pragma once

#include <string>

#include "repalloc/allocation.hpp"

namespace repalloc {

// Feasible per-impression spend targets for a single contract:
// t_min delivers d by always winning the cheapest d/s fraction of supply,
// t_bar is the unconstrained (flat allocation) spend E[p].
struct SpendRange {
  double t_min = 0.0;
  double t_bar = 0.0;
};

struct SolverDiagnostics {
  std::string case_tag;       // flat | step | l2_linear | l2_saturated | kl_unsaturated | kl_saturated
  double lambda1 = 0.0;       // demand multiplier
  double lambda2 = 0.0;       // spend multiplier (slope / tilt rate)
  double residual_norm = 0.0; // max-norm of the constraint residuals
  int iterations = 0;
  std::string note;
};

struct SolveResult {
  Allocation allocation;
  SolverDiagnostics diagnostics;
};

}  // namespace repalloc
