#pragma once

#include <utility>
#include <variant>
#include <vector>

#include "repalloc/landscape.hpp"

namespace repalloc {

// ---------------------------------------------------------------------------
// Allocation: the fraction a(p)/s of supply at price p that a contract is
// served. Solved allocations come in a handful of closed forms; tabulated
// grids cover everything else. All forms store the fraction directly, so
// eval_allocation always returns a value in [0, 1].
// ---------------------------------------------------------------------------

// a/s = level at every price (spend constraint slack).
struct FlatAllocation {
  double level = 0.0;
};

// a/s = min(1, z * (p_max - p)) above zero, 0 past p_max.
struct L2LinearAllocation {
  double z = 0.0;
  double p_max = 0.0;
};

// a/s = 1 below p_min, then linear down to 0 at p_max. p_min == p_max
// degenerates to the minimal-spend step (constant bid at p_min).
struct L2SaturatedAllocation {
  double p_min = 0.0;
  double p_max = 0.0;
};

// a/s = 1 below p0, exp(lambda * (p0 - p)) above.
struct KlExponentialAllocation {
  double p0 = 0.0;
  double lambda = 0.0;
};

// a/s = scale * exp(-lambda * p), scale <= 1.
struct KlUnsaturatedAllocation {
  double scale = 0.0;
  double lambda = 0.0;
};

// Piecewise-linear fraction through (p, value) nodes, ascending in p;
// constant extrapolation outside the node range.
struct TabulatedAllocation {
  std::vector<std::pair<double, double>> grid;
};

using AllocationForm = std::variant<FlatAllocation, L2LinearAllocation, L2SaturatedAllocation,
                                    KlExponentialAllocation, KlUnsaturatedAllocation,
                                    TabulatedAllocation>;

struct Allocation {
  double supply = 1.0;  // s, impressions
  double demand = 0.0;  // d, impressions (d <= s)
  AllocationForm form;
};

// Fraction of supply served at price p, in [0, 1].
double eval_allocation(const Allocation& a, double p);

// integral of (a(p)/s) f(p) dp: the delivered fraction of supply.
// Closed forms via landscape partial and tilted moments.
double expected_demand_fraction(const Allocation& a, const Landscape& landscape);

// integral of p (a(p)/s) f(p) dp: spend per unit of supply.
double expected_spend_fraction(const Allocation& a, const Landscape& landscape);

// One linear piece of a piecewise-linear allocation: value = c + m * p
// on [lo, hi).
struct LinearPiece {
  double lo = 0.0;
  double hi = 0.0;
  double c = 0.0;
  double m = 0.0;
};

// Exact piecewise-linear decomposition on [0, p_cap]. Defined for the flat,
// l2 and tabulated forms; throws std::invalid_argument for the exponential
// (KL) forms.
std::vector<LinearPiece> linear_pieces(const Allocation& a, double p_cap);

}  // namespace repalloc
