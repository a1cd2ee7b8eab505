#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "repalloc/rng.hpp"

namespace repalloc {

// ---------------------------------------------------------------------------
// Bid landscape: the distribution of the highest competing bid ("price")
// faced in an exchange. Everything downstream (allocation solvers, bidding
// strategies, simulation) is driven by its cdf F, density f, quantiles and
// partial moments.
// ---------------------------------------------------------------------------

enum class LandscapeKind { Lognormal, Exponential, Uniform, Empirical };

struct LognormalParams {
  double mu = 0.0;
  double sigma = 1.0;
};

struct ExponentialParams {
  double gamma = 1.0;  // rate; mean price is 1/gamma
};

struct UniformParams {
  double lo = 0.0;
  double hi = 1.0;
};

struct EmpiricalParams {
  std::vector<double> sorted;  // ascending sample prices, size >= 2
};

// value = integral of p^order * f(p) dp over [lo, hi].
struct PartialMoment {
  double lo = 0.0;
  double hi = 0.0;
  int order = 0;
  double value = 0.0;
};

class Landscape {
 public:
  static Landscape lognormal(double mu, double sigma);
  static Landscape exponential(double gamma);
  static Landscape uniform(double lo, double hi);
  // Empirical fit: cdf piecewise linear through (x_(i), (i-1)/(n-1)) over the
  // ascending order statistics, flat outside [min, max]. This is the unique
  // linear-interpolation rule whose density integrates to one over the
  // sample range. A zero-variance sample yields a degenerate (point-mass)
  // landscape that solvers reject.
  static Landscape empirical(std::span<const double> prices);

  double pdf(double p) const;
  double cdf(double p) const;
  // q in [0, 1]. For unbounded kinds quantile(1) is +infinity.
  double quantile(double q) const;

  // integral of p^order * f(p) dp over [lo, hi] (clamped to the support).
  // Closed forms for every kind; order >= 0.
  PartialMoment partial_moment(double lo, double hi, int order) const;
  // Full-support moment E[p^order].
  double moment(int order) const;
  double mean() const { return moment(1); }
  // E[p | lo <= p <= hi]; the window must carry positive mass.
  double conditional_mean(double lo, double hi) const;
  // integral of p^order * exp(lambda*(p0 - p)) * f(p) dp over [p0, inf).
  // The exponent is kept nonpositive so large lambda cannot overflow.
  double tilted_moment(double lambda, double p0, int order) const;

  // Inverse-transform sampling; one uniform draw per sample.
  double sample_one(Rng& rng) const;
  std::vector<double> sample(Rng& rng, std::size_t n) const;

  double support_lo() const;
  // Upper integration bound: the true supremum for bounded kinds,
  // quantile(1 - 1e-12) for unbounded ones.
  double support_hi() const;
  bool degenerate() const;

  LandscapeKind kind() const;
  const LognormalParams& lognormal_params() const;
  const ExponentialParams& exponential_params() const;
  const UniformParams& uniform_params() const;
  const EmpiricalParams& empirical_params() const;

 private:
  using Params = std::variant<LognormalParams, ExponentialParams, UniformParams, EmpiricalParams>;
  explicit Landscape(Params params);

  Params params_;
  double support_hi_ = 0.0;
  bool degenerate_ = false;
};

// Same fit as Landscape::empirical; kept as a free function because it is a
// distinct ingestion step (validation included) rather than a constructor.
Landscape fit_empirical(std::span<const double> prices);

}  // namespace repalloc
