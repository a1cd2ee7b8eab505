#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "repalloc/allocation.hpp"
#include "repalloc/rng.hpp"

namespace repalloc {

// ---------------------------------------------------------------------------
// Randomized bidding strategies. A strategy is a bid probability plus a
// conditional bid distribution, chosen so that the probability of outbidding
// price p reproduces a target allocation fraction: P(bid > p) = a(p)/s.
// ---------------------------------------------------------------------------

// Conditional bid uniform on [lo, hi]; lo == hi is a constant bid.
struct UniformMixtureBid {
  double lo = 0.0;
  double hi = 0.0;
};

// Conditional bid p0 + Exponential(lambda).
struct ExponentialTailBid {
  double p0 = 0.0;
  double lambda = 0.0;
};

// Bids above every finite price (used for flat allocations, which must win
// every auction they enter).
struct AboveSupportBid {};

// Survival function tabulated as (price, win fraction) nodes, piecewise
// linear, non-increasing.
struct TabulatedBid {
  std::vector<std::pair<double, double>> grid;
};

// One segment of a decentralized bid CDF H(p) = exp(E(p)) where E is an
// integral of allocation slopes against the remaining supply fraction
// u(p) = 1 - A(p)/s (see multi.hpp). On [lo, hi], u is linear with slope
// `slope_total` and this contract's allocation decays with slope `slope_own`.
struct ExponentSegment {
  double lo = 0.0;
  double hi = 0.0;
  double u_lo = 0.0;        // 1 - A(lo)/s
  double slope_total = 0.0; // d/dp of A/s magnitude on the segment (>= 0)
  double slope_own = 0.0;   // this contract's decay magnitude (>= 0)
  double tail = 0.0;        // exponent accumulated on segments above hi (<= 0)
};

// H(p) = 0 at or below p_star, exp(sum of segment exponents) between, and 1
// at or above top. Exact segment-wise closed form: each segment contributes
// (slope_own/slope_total) * log(u(hi)/u(p)).
struct PiecewiseExponentBid {
  double p_star = 0.0;
  double top = 0.0;
  std::vector<ExponentSegment> segments;  // ascending, contiguous
  double cdf(double p) const;             // H(p)
};

using BidForm =
    std::variant<UniformMixtureBid, ExponentialTailBid, AboveSupportBid, TabulatedBid,
                 PiecewiseExponentBid>;

struct BidStrategy {
  double bid_probability = 0.0;
  BidForm form;
};

// Strategy realizing a solved allocation (Prop.-1 construction). Rejects
// tabulated allocations with increasing segments: those are not
// implementable by any bid distribution.
BidStrategy strategy_from_allocation(const Allocation& allocation);

// Strategy for the unsaturated linear form a/s = min(1, z (p_max - p)):
// bid with probability min(1, z p_max), uniform on [max(0, p_max - 1/z), p_max].
BidStrategy l2_strategy(double z, double p_max);

// One auction's bid: nullopt with probability 1 - bid_probability, else a
// draw from the conditional distribution. Consumes one uniform for the
// participation coin and (when bidding) one for the bid value.
std::optional<double> sample_bid(const BidStrategy& strategy, Rng& rng);

// P(bid > p): the fraction of price-p supply this strategy wins against the
// external market alone. Matches eval_allocation of the generating
// allocation pointwise (at a degenerate step the saturated convention
// "win at p_min" is kept so the round trip is exact).
double win_fraction(const BidStrategy& strategy, double p);

}  // namespace repalloc
