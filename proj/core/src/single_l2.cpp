#include "repalloc/single_l2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "repalloc/errors.hpp"

namespace repalloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kResidualTol = 1e-10;
constexpr int kMaxNewtonIters = 100;
constexpr int kMaxHalvings = 40;

void validate_contract(const Landscape& L, double d, double s) {
  if (L.degenerate())
    throw std::invalid_argument("solver: degenerate (zero-variance) landscape");
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("solver: supply must be positive");
  if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument("solver: demand must be positive");
  if (d > s) throw InfeasibleError("solver: demand exceeds supply");
}

// Deterministic bisection on a bracketing sign change; drives the interval
// below an absolute-or-ulp width.
template <typename F>
double bisect(F&& f, double lo, double hi, int* iters_out = nullptr) {
  double flo = f(lo);
  int iters = 0;
  while (hi - lo > std::max(1e-12, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(hi)) &&
         iters < 200) {
    double mid = 0.5 * (lo + hi);
    double fm = f(mid);
    if ((flo <= 0.0 && fm <= 0.0) || (flo >= 0.0 && fm >= 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    ++iters;
  }
  if (iters_out) *iters_out += iters;
  return 0.5 * (lo + hi);
}

// Boundary spend ratio t0 separating the saturated-window form (t < t0)
// from the unsaturated linear form (t >= t0): the window reaches p_min = 0,
// i.e. the allocation is (1 - p/y) on [0, y]. Returns {y0, t0}.
std::array<double, 2> case_boundary(const Landscape& L, double ratio) {
  auto g = [&](double y) {
    return L.cdf(y) - L.partial_moment(0.0, y, 1).value / y - ratio;
  };
  double lo = L.quantile(std::min(ratio, 1.0 - 1e-12));
  if (!(lo > 0.0)) lo = 1e-300;
  double hi = std::max(lo * 2.0, L.support_hi());
  int expand = 0;
  while (g(hi) < 0.0 && expand++ < 200) hi *= 2.0;
  if (expand >= 200) throw ConvergenceError("solve_l2: case-boundary bracket failed");
  double y0 = bisect(g, lo, hi);
  double t0 = (L.partial_moment(0.0, y0, 1).value - L.partial_moment(0.0, y0, 2).value / y0) / ratio;
  return {y0, t0};
}

// Globally convergent fallback for the saturated window, used when Newton
// stalls (its damped steps can die in a sliver of the window space when the
// solution is a narrow window on a support bounded away from zero). The
// demand constraint pins y for every x (demand rises with y), and the spend
// at the demand-matched window falls monotonically as x sweeps right from 0
// (widest window, boundary spend t0) to the d/s quantile (minimal-spend
// step), so both layers bisect on clean brackets.
NewtonResult saturated_window_bisection(const Landscape& L, double d, double s, double t) {
  double ratio = d / s;
  const double target_demand = ratio;
  const double target_spend = t * ratio;
  double q = L.quantile(ratio);
  int iters = 0;

  auto y_for = [&](double x) {
    auto h = [&](double y) { return saturated_constraints(L, x, y)[0] - target_demand; };
    double hi = std::max({2.0 * q, L.support_hi(), x + 1.0});
    int expand = 0;
    while (h(hi) < 0.0 && expand++ < 200) hi *= 2.0;
    if (expand >= 200)
      throw ConvergenceError("solve_l2: saturated fallback: p_max bracket failed");
    return bisect(h, x, hi, &iters);
  };
  auto g = [&](double x) { return saturated_constraints(L, x, y_for(x))[1] - target_spend; };
  double x = bisect(g, 0.0, q, &iters);
  double y = y_for(x);
  auto c = saturated_constraints(L, x, y);
  return {x, y, iters,
          std::max(std::abs(c[0] - target_demand), std::abs(c[1] - target_spend))};
}

}  // namespace

SpendRange feasible_spend_range(const Landscape& landscape, double d, double s) {
  validate_contract(landscape, d, s);
  double ratio = d / s;
  SpendRange r;
  r.t_bar = landscape.mean();
  r.t_min = landscape.conditional_mean(0.0, landscape.quantile(ratio));
  return r;
}

std::array<double, 2> saturated_constraints(const Landscape& landscape, double x, double y) {
  Allocation a{1.0, 0.0, L2SaturatedAllocation{x, y}};
  return {expected_demand_fraction(a, landscape), expected_spend_fraction(a, landscape)};
}

WindowJacobian jacobian(const Landscape& landscape, double x, double y) {
  if (!(y > x)) throw std::invalid_argument("jacobian: need p_min < p_max");
  double mass = landscape.cdf(y) - landscape.cdf(x);
  if (!(mass > 0.0)) throw std::invalid_argument("jacobian: window carries no probability mass");
  double ep = landscape.partial_moment(x, y, 1).value / mass;
  double ep2 = landscape.partial_moment(x, y, 2).value / mass;
  WindowJacobian J;
  J.prefactor = mass / ((y - x) * (y - x));
  J.b11 = ep - x;
  J.b12 = y - ep;
  J.b21 = ep2 - x * ep;
  J.b22 = y * ep - ep2;
  return J;
}

NewtonResult newton_solve_pmin_pmax(const Landscape& landscape, double d, double s, double t,
                                    double x0, double y0) {
  validate_contract(landscape, d, s);
  double ratio = d / s;
  const double target_demand = ratio;
  const double target_spend = t * ratio;

  auto valid = [&](double x, double y) {
    return x >= 0.0 && y > x && std::isfinite(y) &&
           landscape.cdf(y) - landscape.cdf(x) > 1e-15;
  };
  if (!valid(x0, y0))
    throw std::invalid_argument("newton_solve_pmin_pmax: invalid starting window");

  double x = x0, y = y0;
  auto resid = [&](double rx, double ry) {
    auto c = saturated_constraints(landscape, rx, ry);
    return std::array<double, 2>{c[0] - target_demand, c[1] - target_spend};
  };

  auto r = resid(x, y);
  double rnorm = std::max(std::abs(r[0]), std::abs(r[1]));
  int it = 0;
  while (rnorm >= kResidualTol && it < kMaxNewtonIters) {
    WindowJacobian J = jacobian(landscape, x, y);
    double a = J.j11(), b = J.j12(), c = J.j21(), e = J.j22();
    double det = a * e - b * c;
    if (det == 0.0 || !std::isfinite(det))
      throw ConvergenceError("newton_solve_pmin_pmax: singular Jacobian");
    double dy = (-r[0] * e + r[1] * b) / det;
    double dx = (-r[1] * a + r[0] * c) / det;

    double alpha = 1.0;
    int halves = 0;
    double nx = x + dx, ny = y + dy;
    while (!valid(nx, ny) && halves < kMaxHalvings) {
      alpha *= 0.5;
      nx = x + alpha * dx;
      ny = y + alpha * dy;
      ++halves;
    }
    if (halves >= kMaxHalvings)
      throw ConvergenceError("newton_solve_pmin_pmax: step damping exhausted");
    x = nx;
    y = ny;
    r = resid(x, y);
    rnorm = std::max(std::abs(r[0]), std::abs(r[1]));
    ++it;
  }
  if (rnorm >= kResidualTol)
    throw ConvergenceError("newton_solve_pmin_pmax: no convergence in 100 iterations");
  return {x, y, it, rnorm};
}

SolveResult solve_l2(const Landscape& landscape, double d, double s, double t) {
  validate_contract(landscape, d, s);
  if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("solve_l2: spend target must be positive");

  double ratio = d / s;

  SolveResult out;
  out.allocation.supply = s;
  out.allocation.demand = d;

  // d = s leaves no freedom: the whole supply is allocated and the spend is
  // E[p] no matter what t says.
  if (ratio >= 1.0) {
    out.allocation.form = FlatAllocation{1.0};
    out.diagnostics.case_tag = "flat";
    out.diagnostics.note = "d = s: whole supply allocated regardless of spend target";
    return out;
  }

  SpendRange range = feasible_spend_range(landscape, d, s);
  double eps = 1e-12 * std::max(1.0, range.t_bar);

  if (t < range.t_min - eps) {
    std::ostringstream msg;
    msg << "solve_l2: spend target " << t << " below minimal feasible spend; feasible range ["
        << range.t_min << ", " << range.t_bar << "]";
    throw InfeasibleError(msg.str());
  }

  if (t >= range.t_bar - eps) {
    out.allocation.form = FlatAllocation{ratio};
    out.diagnostics.case_tag = "flat";
    out.diagnostics.lambda1 = 0.0;
    out.diagnostics.lambda2 = 0.0;
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

  auto [y0, t0] = case_boundary(landscape, ratio);
  if (t >= t0) {
    // Unsaturated linear form: bisect on p_max via the spend-free ratio
    // demand/spend = 1/t, which is monotone decreasing in p_max.
    auto ratio_fn = [&](double y) {
      double dem = y * landscape.cdf(y) - landscape.partial_moment(0.0, y, 1).value;
      double sp = y * landscape.partial_moment(0.0, y, 1).value -
                  landscape.partial_moment(0.0, y, 2).value;
      return dem / sp - 1.0 / t;
    };
    double lo = y0;
    double hi = std::max(2.0 * y0, landscape.support_hi());
    int iters = 0;
    int expand = 0;
    while (ratio_fn(hi) > 0.0 && expand++ < 200) hi *= 2.0;
    if (expand >= 200) throw ConvergenceError("solve_l2: p_max bracket failed (t too close to t_bar)");
    double y = bisect(ratio_fn, lo, hi, &iters);
    double z = ratio / (y * landscape.cdf(y) - landscape.partial_moment(0.0, y, 1).value);

    out.allocation.form = L2LinearAllocation{z, y};
    out.diagnostics.case_tag = "l2_linear";
    out.diagnostics.lambda1 = z * y - ratio;
    out.diagnostics.lambda2 = z;
    out.diagnostics.iterations = iters;
    double dem = expected_demand_fraction(out.allocation, landscape);
    double sp = expected_spend_fraction(out.allocation, landscape);
    out.diagnostics.residual_norm =
        std::max(std::abs(dem - ratio), std::abs(sp - t * ratio));
    return out;
  }

  // Saturated window via Newton, initialized inside the bracket; nested
  // bisection recovers the rare instances where the damped steps stall.
  double x0 = 0.5 * landscape.quantile(ratio);
  double ystart = landscape.quantile(std::min(1.0 - 1e-9, ratio + 0.5 * (1.0 - ratio)));
  NewtonResult nr;
  try {
    nr = newton_solve_pmin_pmax(landscape, d, s, t, x0, ystart);
  } catch (const ConvergenceError&) {
    nr = saturated_window_bisection(landscape, d, s, t);
    out.diagnostics.note = "newton stalled; saturated window recovered by nested bisection";
  }
  out.allocation.form = L2SaturatedAllocation{nr.p_min, nr.p_max};
  out.diagnostics.case_tag = "l2_saturated";
  out.diagnostics.lambda2 = 1.0 / (nr.p_max - nr.p_min);
  out.diagnostics.lambda1 = nr.p_max / (nr.p_max - nr.p_min) - ratio;
  out.diagnostics.iterations = nr.iterations;
  out.diagnostics.residual_norm = nr.residual_norm;
  return out;
}

}  // namespace repalloc
