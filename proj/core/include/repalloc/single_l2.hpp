#pragma once

#include <array>

#include "repalloc/landscape.hpp"
#include "repalloc/solver_types.hpp"

namespace repalloc {

// [t_min, t_bar] for a contract of d impressions out of s.
// Spend targets below t_min are infeasible; targets at or above t_bar leave
// the spend constraint slack and the allocation flat.
SpendRange feasible_spend_range(const Landscape& landscape, double d, double s);

// Most representative allocation under the L2 objective, subject to
// delivering d of s impressions at spend at most t per impression.
// Throws InfeasibleError below t_min; clamps to the flat allocation above
// t_bar (recorded in diagnostics.note).
SolveResult solve_l2(const Landscape& landscape, double d, double s, double t);

// Demand and spend fractions of the saturated window form (a/s = 1 below x,
// linear to 0 at y): the residual map the Newton iteration drives to
// (d/s, t d/s).
std::array<double, 2> saturated_constraints(const Landscape& landscape, double x, double y);

// Jacobian of saturated_constraints at (x, y) = (p_min, p_max).
// Rows: demand, spend; columns: d/dy, d/dx. Factored as
// prefactor * bracket with prefactor = (F(y)-F(x)) / (y-x)^2 and the bracket
// built from the conditional first and second moments on the window.
struct WindowJacobian {
  double prefactor = 0.0;
  double b11 = 0.0, b12 = 0.0;  // demand row:  E[p]-x,      y-E[p]
  double b21 = 0.0, b22 = 0.0;  // spend row:   E[p^2]-xE[p], yE[p]-E[p^2]
  double j11() const { return prefactor * b11; }
  double j12() const { return prefactor * b12; }
  double j21() const { return prefactor * b21; }
  double j22() const { return prefactor * b22; }
  double bracket_det() const { return b11 * b22 - b12 * b21; }
};

WindowJacobian jacobian(const Landscape& landscape, double x, double y);

struct NewtonResult {
  double p_min = 0.0;
  double p_max = 0.0;
  int iterations = 0;
  double residual_norm = 0.0;
};

// Damped Newton iteration for the saturated window (p_min, p_max) hitting
// demand d and spend t d exactly. Steps are halved (at most 40 times) until
// the iterate keeps 0 <= p_min < p_max with positive window mass; stops when
// the residual max-norm drops below 1e-10, fails after 100 iterations.
NewtonResult newton_solve_pmin_pmax(const Landscape& landscape, double d, double s, double t,
                                    double x0, double y0);

}  // namespace repalloc
