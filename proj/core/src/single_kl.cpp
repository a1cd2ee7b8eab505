#include "repalloc/single_kl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "repalloc/errors.hpp"
#include "repalloc/single_l2.hpp"
#include "quad.hpp"

namespace repalloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Saturation point p0 for a given tilt rate: the unique root of
// F(p0) + T0(lambda, p0) = d/s, which is increasing in p0. Safeguarded
// Newton (dD/dp0 = lambda * T0) inside [0, quantile(d/s)], warm-started
// from the previous lambda's solution.
double solve_p0(const Landscape& L, double lambda, double ratio, double p0_hint, double p_hi) {
  double lo = 0.0, hi = p_hi;
  double p0 = std::clamp(p0_hint, lo, hi);
  for (int it = 0; it < 200; ++it) {
    double t0 = L.tilted_moment(lambda, p0, 0);
    double r = L.cdf(p0) + t0 - ratio;
    if (std::abs(r) < 1e-13) return p0;
    if (r > 0.0)
      hi = p0;
    else
      lo = p0;
    double deriv = lambda * t0;
    double next = (deriv > 0.0) ? p0 - r / deriv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo < 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, hi)) return 0.5 * (lo + hi);
    p0 = next;
  }
  return p0;
}

struct TiltedSolution {
  AllocationForm form;
  bool saturated = false;
  double p0 = 0.0;
  double scale = 0.0;
  double spend = 0.0;  // fraction of supply
};

TiltedSolution allocation_for_lambda(const Landscape& L, double lambda, double ratio,
                                     double p0_hint, double p_hi) {
  TiltedSolution sol;
  double s0 = L.tilted_moment(lambda, 0.0, 0);
  if (ratio <= s0) {
    sol.saturated = false;
    sol.scale = ratio / s0;
    sol.form = KlUnsaturatedAllocation{sol.scale, lambda};
    sol.spend = sol.scale * L.tilted_moment(lambda, 0.0, 1);
  } else {
    sol.saturated = true;
    sol.p0 = solve_p0(L, lambda, ratio, p0_hint, p_hi);
    sol.form = KlExponentialAllocation{sol.p0, lambda};
    sol.spend = L.partial_moment(0.0, sol.p0, 1).value + L.tilted_moment(lambda, sol.p0, 1);
  }
  return sol;
}

std::vector<double> form_breakpoints(const Allocation& a) {
  std::vector<double> bp;
  if (const auto* f = std::get_if<L2LinearAllocation>(&a.form)) {
    bp.push_back(std::max(0.0, f->p_max - 1.0 / f->z));
    bp.push_back(f->p_max);
  } else if (const auto* f = std::get_if<L2SaturatedAllocation>(&a.form)) {
    bp.push_back(f->p_min);
    bp.push_back(f->p_max);
  } else if (const auto* f = std::get_if<KlExponentialAllocation>(&a.form)) {
    bp.push_back(f->p0);
  } else if (const auto* f = std::get_if<TabulatedAllocation>(&a.form)) {
    for (const auto& [p, v] : f->grid) bp.push_back(p);
  }
  return bp;
}

}  // namespace

double kl_divergence(const Allocation& allocation, const Landscape& landscape) {
  if (!(allocation.demand > 0.0) || !(allocation.supply > 0.0))
    throw std::invalid_argument("kl_divergence: allocation must carry positive supply and demand");
  double sd = allocation.supply / allocation.demand;

  std::vector<double> cuts = form_breakpoints(allocation);
  cuts.push_back(landscape.support_lo());
  cuts.push_back(landscape.support_hi());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  auto integrand = [&](double p) {
    double r = sd * eval_allocation(allocation, p);
    if (r <= 0.0) return 0.0;
    return landscape.pdf(p) * r * std::log(r);
  };

  double lo_cap = landscape.support_lo();
  double hi_cap = landscape.support_hi();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double a = std::clamp(cuts[i], lo_cap, hi_cap);
    double b = std::clamp(cuts[i + 1], lo_cap, hi_cap);
    if (b > a) acc += detail::integrate(integrand, a, b, 1e-10);
  }

  // duplicate-sample atoms carry mass the density quadrature cannot see
  if (landscape.kind() == LandscapeKind::Empirical && !landscape.degenerate()) {
    const auto& xs = landscape.empirical_params().sorted;
    double n1 = static_cast<double>(xs.size() - 1);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      if (xs[i + 1] != xs[i]) continue;
      double r = sd * eval_allocation(allocation, xs[i]);
      if (r > 0.0) acc += r * std::log(r) / n1;
    }
  }
  return acc;
}

SolveResult solve_kl(const Landscape& landscape, double d, double s, double t) {
  SpendRange range = feasible_spend_range(landscape, d, s);  // validates inputs
  if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("solve_kl: spend target must be positive");

  double ratio = d / s;
  double eps = 1e-12 * std::max(1.0, range.t_bar);

  SolveResult out;
  out.allocation.supply = s;
  out.allocation.demand = d;

  // d = s leaves no freedom; see solve_l2.
  if (ratio >= 1.0) {
    out.allocation.form = FlatAllocation{1.0};
    out.diagnostics.case_tag = "flat";
    out.diagnostics.note = "d = s: whole supply allocated regardless of spend target";
    return out;
  }

  if (t < range.t_min - eps) {
    std::ostringstream msg;
    msg << "solve_kl: spend target " << t << " below minimal feasible spend; feasible range ["
        << range.t_min << ", " << range.t_bar << "]";
    throw InfeasibleError(msg.str());
  }
  if (t >= range.t_bar - eps) {
    out.allocation.form = FlatAllocation{ratio};
    out.diagnostics.case_tag = "flat";
    if (t > range.t_bar + eps)
      out.diagnostics.note = "spend target above t_bar; spend constraint slack, allocation flat";
    return out;
  }
  if (t <= range.t_min + eps) {
    double pm = landscape.quantile(ratio);
    out.allocation.form = L2SaturatedAllocation{pm, pm};
    out.diagnostics.case_tag = "step";
    out.diagnostics.lambda2 = kInf;
    out.diagnostics.note = "spend target equals minimal feasible spend; constant bid at p_min";
    return out;
  }

  const double target = t * ratio;
  double p_hi = landscape.quantile(std::min(ratio, 1.0 - 1e-15));
  double p0_hint = 0.0;

  auto spend_at = [&](double lambda) {
    TiltedSolution sol = allocation_for_lambda(landscape, lambda, ratio, p0_hint, p_hi);
    p0_hint = sol.p0;  // continuity warm start for the next evaluation
    return sol;
  };

  // Spend decreases from t_bar*ratio at lambda=0 toward t_min*ratio; bracket
  // and bisect the tilt rate.
  double lo = 0.0;
  double hi = 1.0 / std::max(range.t_bar, 1e-300);
  int expand = 0;
  while (spend_at(hi).spend > target && expand++ < 400) hi *= 2.0;
  if (expand >= 400) throw ConvergenceError("solve_kl: lambda bracket failed");

  int iters = 0;
  double lambda = hi;
  TiltedSolution sol = spend_at(hi);
  while (hi - lo > std::max(1e-13, 2.0 * std::numeric_limits<double>::epsilon() * hi) && iters < 200) {
    double mid = 0.5 * (lo + hi);
    TiltedSolution smid = spend_at(mid);
    if (smid.spend > target) {
      lo = mid;
    } else {
      hi = mid;
      lambda = mid;
      sol = smid;
    }
    ++iters;
  }

  out.allocation.form = sol.form;
  out.diagnostics.case_tag = sol.saturated ? "kl_saturated" : "kl_unsaturated";
  out.diagnostics.lambda2 = lambda;
  // Demand multiplier of the tilted family: a = (d/z) e^{-lambda p} means
  // log(z s / d) - 1 plays the role of the demand dual.
  if (!sol.saturated && sol.scale > 0.0)
    out.diagnostics.lambda1 = std::log(1.0 / sol.scale) - 1.0;
  out.diagnostics.iterations = iters;
  double dem = expected_demand_fraction(out.allocation, landscape);
  double sp = expected_spend_fraction(out.allocation, landscape);
  out.diagnostics.residual_norm = std::max(std::abs(dem - ratio), std::abs(sp - target));
  return out;
}

KlClosedForm kl_closed_form_exponential(double gamma, double d, double s, double t) {
  if (!(gamma > 0.0)) throw std::invalid_argument("kl_closed_form_exponential: gamma must be positive");
  if (!(s > 0.0) || !(d > 0.0) || d > s)
    throw std::invalid_argument("kl_closed_form_exponential: need 0 < d <= s");
  double ratio = d / s;
  double lo = ratio / gamma, hi = 1.0 / gamma;
  if (t < lo || t > hi) {
    std::ostringstream msg;
    msg << "kl_closed_form_exponential: t outside closed-form regime [" << lo << ", " << hi << "]";
    throw std::invalid_argument(msg.str());
  }
  KlClosedForm out;
  double z = gamma * t;
  out.allocation.supply = s;
  out.allocation.demand = d;
  out.allocation.form = KlUnsaturatedAllocation{ratio / z, 1.0 / t - gamma};
  out.kl_value = z - 1.0 - std::log(z);
  return out;
}

}  // namespace repalloc
