#include "repalloc/bidding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace repalloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double interp_survival(const std::vector<std::pair<double, double>>& g, double p) {
  if (g.empty()) return 0.0;
  if (p <= g.front().first) return clamp01(g.front().second);
  if (p >= g.back().first) return clamp01(g.back().second);
  auto it = std::upper_bound(g.begin(), g.end(), p,
                             [](double v, const auto& node) { return v < node.first; });
  auto [pb, vb] = *it;
  auto [pa, va] = *(it - 1);
  if (pb == pa) return clamp01(vb);
  double w = (p - pa) / (pb - pa);
  return clamp01(va + w * (vb - va));
}

}  // namespace

double PiecewiseExponentBid::cdf(double p) const {
  if (p <= p_star) return 0.0;
  if (p >= top || segments.empty()) return 1.0;
  // Find the segment containing p.
  auto it = std::upper_bound(segments.begin(), segments.end(), p,
                             [](double v, const ExponentSegment& s) { return v < s.hi; });
  if (it == segments.end()) return 1.0;
  const ExponentSegment& s = *it;
  double e = s.tail;
  if (s.slope_total > 0.0 && s.slope_own > 0.0) {
    double up = s.u_lo + s.slope_total * (std::max(p, s.lo) - s.lo);
    double uhi = s.u_lo + s.slope_total * (s.hi - s.lo);
    if (up <= 0.0) return 0.0;
    e += -(s.slope_own / s.slope_total) * (std::log(uhi) - std::log(up));
  }
  return std::exp(e);
}

BidStrategy l2_strategy(double z, double p_max) {
  if (!(z > 0.0) || !(p_max > 0.0))
    throw std::invalid_argument("l2_strategy: need positive z and p_max");
  BidStrategy s;
  s.bid_probability = std::min(1.0, z * p_max);
  s.form = UniformMixtureBid{std::max(0.0, p_max - 1.0 / z), p_max};
  return s;
}

BidStrategy strategy_from_allocation(const Allocation& allocation) {
  BidStrategy s;
  if (const auto* f = std::get_if<FlatAllocation>(&allocation.form)) {
    s.bid_probability = clamp01(f->level);
    s.form = AboveSupportBid{};
  } else if (const auto* f = std::get_if<L2LinearAllocation>(&allocation.form)) {
    return l2_strategy(f->z, f->p_max);
  } else if (const auto* f = std::get_if<L2SaturatedAllocation>(&allocation.form)) {
    s.bid_probability = 1.0;
    s.form = UniformMixtureBid{f->p_min, f->p_max};
  } else if (const auto* f = std::get_if<KlExponentialAllocation>(&allocation.form)) {
    s.bid_probability = 1.0;
    s.form = ExponentialTailBid{f->p0, f->lambda};
  } else if (const auto* f = std::get_if<KlUnsaturatedAllocation>(&allocation.form)) {
    s.bid_probability = clamp01(f->scale);
    s.form = ExponentialTailBid{0.0, f->lambda};
  } else if (const auto* f = std::get_if<TabulatedAllocation>(&allocation.form)) {
    const auto& g = f->grid;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i].second < -1e-12 || g[i].second > 1.0 + 1e-12)
        throw std::invalid_argument("strategy_from_allocation: tabulated values outside [0, 1]");
      if (i > 0 && g[i].second > g[i - 1].second + 1e-12)
        throw std::invalid_argument(
            "strategy_from_allocation: increasing allocation is not implementable");
    }
    s.bid_probability = g.empty() ? 0.0 : clamp01(g.front().second);
    s.form = TabulatedBid{g};
  }
  return s;
}

double win_fraction(const BidStrategy& strategy, double p) {
  double q = strategy.bid_probability;
  if (const auto* f = std::get_if<UniformMixtureBid>(&strategy.form)) {
    if (f->hi == f->lo) return p <= f->lo ? q : 0.0;  // constant bid (step allocation)
    return q * clamp01((f->hi - p) / (f->hi - f->lo));
  }
  if (const auto* f = std::get_if<ExponentialTailBid>(&strategy.form)) {
    if (p <= f->p0) return q;
    return q * std::exp(f->lambda * (f->p0 - p));
  }
  if (std::holds_alternative<AboveSupportBid>(strategy.form)) return q;
  if (const auto* f = std::get_if<TabulatedBid>(&strategy.form)) return interp_survival(f->grid, p);
  if (const auto* f = std::get_if<PiecewiseExponentBid>(&strategy.form)) return 1.0 - f->cdf(p);
  return 0.0;
}

std::optional<double> sample_bid(const BidStrategy& strategy, Rng& rng) {
  double coin = rng.uniform01();
  if (coin >= strategy.bid_probability) return std::nullopt;

  if (const auto* f = std::get_if<UniformMixtureBid>(&strategy.form)) {
    double u = rng.uniform01();
    return f->lo + u * (f->hi - f->lo);
  }
  if (const auto* f = std::get_if<ExponentialTailBid>(&strategy.form)) {
    double u = rng.uniform01();
    return f->p0 - std::log1p(-u) / f->lambda;
  }
  if (std::holds_alternative<AboveSupportBid>(strategy.form)) {
    rng.uniform01();  // keep the per-strategy draw count fixed
    return kInf;
  }
  if (const auto* f = std::get_if<TabulatedBid>(&strategy.form)) {
    // Invert the piecewise-linear survival at a level uniform in (0, q).
    double q = strategy.bid_probability;
    double y = q * rng.uniform01();
    const auto& g = f->grid;
    double lo = g.front().first, hi = g.back().first;
    for (int i = 0; i < 200 && hi - lo > std::max(1e-13, 4e-16 * std::abs(hi)); ++i) {
      double mid = 0.5 * (lo + hi);
      if (interp_survival(g, mid) > y)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }
  if (const auto* f = std::get_if<PiecewiseExponentBid>(&strategy.form)) {
    double h0 = f->cdf(0.0);
    double target = h0 + (1.0 - h0) * rng.uniform01();
    double lo = std::max(f->p_star, 0.0), hi = f->top;
    for (int i = 0; i < 200 && hi - lo > std::max(1e-13, 4e-16 * std::abs(hi)); ++i) {
      double mid = 0.5 * (lo + hi);
      if (f->cdf(mid) < target)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }
  return std::nullopt;
}

}  // namespace repalloc
