#pragma once

#include <string>
#include <vector>

#include "repalloc/bidding.hpp"
#include "repalloc/landscape.hpp"
#include "repalloc/solver_types.hpp"

namespace repalloc {

struct ContractSpec {
  double d = 0.0;  // demanded impressions
  double t = 0.0;  // spend target per impression
};

struct ContractSet {
  double s = 0.0;  // shared supply
  std::vector<ContractSpec> contracts;
};

// Joint most-representative (L2) allocation for several contracts sharing
// one supply. Three regimes:
//   decoupled:            independent single-contract solutions never exceed
//                         the supply; they are returned unchanged.
//   common_slope:         supply binds below p_star; all allocations decay
//                         with one slope w, contract j reaching zero at
//                         p_max[j] and holding level c[j] below p_star.
//   not_decentralizable:  the coupled optimum has unequal spend multipliers;
//                         the closest common-slope fit is returned with its
//                         nonzero residual recorded.
struct MultiAllocation {
  double supply = 0.0;
  std::vector<Allocation> allocations;
  double p_star = 0.0;
  bool decentralizable = false;
  std::string case_tag;  // decoupled | common_slope | not_decentralizable
  double common_slope = 0.0;       // w (0 for decoupled)
  std::vector<double> p_max;       // per contract; +inf for flat allocations
  std::vector<double> c;           // flat level of each contract below p_star
  double residual_norm = 0.0;      // max relative demand/spend residual
  int iterations = 0;
  std::string note;
};

// A(p)/s: total allocated fraction at price p.
double total_fraction(const MultiAllocation& multi, double p);

MultiAllocation solve_multi(const Landscape& landscape, const ContractSet& set);

// Independent per-contract bid distributions H_j reproducing a joint
// allocation: H_j(p) = exp(integral over x > p of a_j'(x) / (s - A(x)) dx),
// zero at or below the supply-exhaustion price p_star. Works on any set of
// non-increasing piecewise-linear allocations that decay to zero (the
// integrals are evaluated segment-by-segment in closed form); a single
// allocation of any form falls back to the exact one-contract construction.
std::vector<BidStrategy> decentralize(const std::vector<Allocation>& allocations, double s);

struct DecentralizableReport {
  bool decentralizable = false;
  std::string diagnosis;
  MultiAllocation solution;
};

DecentralizableReport is_decentralizable(const Landscape& landscape, const ContractSet& set);

struct ScaleSpendsResult {
  double kappa = 1.0;      // minimal uniform spend multiplier, within 1e-6
  ContractSet scaled;
  MultiAllocation solution;
};

// Smallest kappa >= 1 such that scaling every spend target by kappa makes
// the contract set decentralizable. Doubling bracket capped at 1000, then
// bisection to 1e-6.
ScaleSpendsResult scale_spends(const Landscape& landscape, const ContractSet& set);

}  // namespace repalloc
