#include "repalloc/multi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "repalloc/errors.hpp"
#include "repalloc/single_l2.hpp"

namespace repalloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEqualSlopeTol = 1e-6;  // relative residual counting as "solved"

void validate_set(const Landscape& L, const ContractSet& set) {
  if (L.degenerate()) throw std::invalid_argument("solve_multi: degenerate landscape");
  if (!(set.s > 0.0)) throw std::invalid_argument("solve_multi: supply must be positive");
  if (set.contracts.empty()) throw std::invalid_argument("solve_multi: empty contract set");
  double total = 0.0;
  for (const auto& cspec : set.contracts) {
    if (!(cspec.d > 0.0)) throw std::invalid_argument("solve_multi: demands must be positive");
    if (!(cspec.t > 0.0)) throw std::invalid_argument("solve_multi: spend targets must be positive");
    total += cspec.d;
  }
  if (total > set.s * (1.0 + 1e-12))
    throw InfeasibleError("solve_multi: total demand exceeds supply");
  // Feasibility against residual supply: contract j must be deliverable even
  // if every other contract takes its demand off the top.
  for (std::size_t j = 0; j < set.contracts.size(); ++j) {
    double resid_supply = set.s - (total - set.contracts[j].d);
    SpendRange r = feasible_spend_range(L, set.contracts[j].d, resid_supply);
    if (set.contracts[j].t < r.t_min - 1e-12 * std::max(1.0, r.t_bar)) {
      std::ostringstream msg;
      msg << "solve_multi: contract " << j << " spend target " << set.contracts[j].t
          << " below minimal feasible spend " << r.t_min << " at residual supply " << resid_supply;
      throw InfeasibleError(msg.str());
    }
  }
}

// --- common-slope family -----------------------------------------------

// Parameters theta = (w, q_1..q_m); p_star follows from sum_j w (q_j - p_star) = 1.
struct FamilyEval {
  double p_star = 0.0;
  std::vector<Allocation> allocations;  // tabulated exact piecewise-linear forms
  bool valid = false;
};

Allocation family_member(double s, double d, double c, double p_star, double q) {
  TabulatedAllocation tab;
  if (p_star > 0.0) tab.grid = {{0.0, c}, {p_star, c}, {q, 0.0}};
  else tab.grid = {{0.0, c}, {q, 0.0}};
  return Allocation{s, d, std::move(tab)};
}

FamilyEval eval_family(const ContractSet& set, const std::vector<double>& theta) {
  FamilyEval fe;
  std::size_t m = set.contracts.size();
  double w = theta[0];
  if (!(w > 0.0)) return fe;
  double sum_q = std::accumulate(theta.begin() + 1, theta.end(), 0.0);
  double p_star = (w * sum_q - 1.0) / (static_cast<double>(m) * w);
  if (p_star < -1e-9) return fe;
  p_star = std::max(p_star, 0.0);
  fe.p_star = p_star;
  fe.allocations.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    double q = theta[1 + j];
    if (!(q > p_star)) return fe;
    double c = w * (q - p_star);
    if (c > 1.0 + 1e-9) return fe;
    fe.allocations.push_back(family_member(set.s, set.contracts[j].d, std::min(c, 1.0), p_star, q));
  }
  fe.valid = true;
  return fe;
}

// Per-equation relative residuals: demand then spend for each contract.
std::vector<double> family_residuals(const Landscape& L, const ContractSet& set,
                                     const FamilyEval& fe) {
  std::size_t m = set.contracts.size();
  std::vector<double> r(2 * m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double ratio = set.contracts[j].d / set.s;
    double target_spend = set.contracts[j].t * ratio;
    double dem = expected_demand_fraction(fe.allocations[j], L);
    double sp = expected_spend_fraction(fe.allocations[j], L);
    r[2 * j] = (dem - ratio) / ratio;
    r[2 * j + 1] = (sp - target_spend) / target_spend;
  }
  return r;
}

double norm_inf(const std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n = std::max(n, std::abs(x));
  return n;
}

double norm2sq(const std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  return n;
}

// Solve (A + mu I) x = b for a small dense symmetric system, Gaussian
// elimination with partial pivoting.
std::vector<double> solve_dense(std::vector<std::vector<double>> A, std::vector<double> b,
                                double mu) {
  std::size_t n = b.size();
  for (std::size_t i = 0; i < n; ++i) A[i][i] += mu;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t row = col + 1; row < n; ++row)
      if (std::abs(A[row][col]) > std::abs(A[piv][col])) piv = row;
    std::swap(A[piv], A[col]);
    std::swap(b[piv], b[col]);
    double diag = A[col][col];
    if (diag == 0.0) return {};
    for (std::size_t row = col + 1; row < n; ++row) {
      double f = A[row][col] / diag;
      if (f == 0.0) continue;
      for (std::size_t k = col; k < n; ++k) A[row][k] -= f * A[col][k];
      b[row] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t k = i + 1; k < n; ++k) acc -= A[i][k] * x[k];
    x[i] = acc / A[i][i];
  }
  return x;
}

struct CommonSlopeFit {
  std::vector<double> theta;  // (w, q_1..q_m)
  FamilyEval fe;
  double residual_norm = 0.0;
  int iterations = 0;
};

// Damped Gauss-Newton (Levenberg-Marquardt) least squares over the
// common-slope family. The stacked system has 2m equations and m+1 free
// parameters; when the contract set is decentralizable the equations are
// consistent and the residual is driven to zero.
CommonSlopeFit fit_common_slope(const Landscape& L, const ContractSet& set,
                                std::vector<double> theta0) {
  std::size_t m = set.contracts.size();
  std::size_t n = m + 1;

  auto try_eval = [&](const std::vector<double>& th, FamilyEval* fe, std::vector<double>* r) {
    *fe = eval_family(set, th);
    if (!fe->valid) return false;
    *r = family_residuals(L, set, *fe);
    return true;
  };

  CommonSlopeFit best;
  best.theta = theta0;
  std::vector<double> r;
  if (!try_eval(theta0, &best.fe, &r))
    throw ConvergenceError("solve_multi: invalid common-slope initialization");
  double cost = norm2sq(r);
  double mu = 1e-8;

  for (int it = 0; it < 300; ++it) {
    best.iterations = it;
    if (norm_inf(r) < 1e-12) break;

    // Forward-difference Jacobian of the residual stack.
    std::vector<std::vector<double>> J(2 * m, std::vector<double>(n, 0.0));
    for (std::size_t k = 0; k < n; ++k) {
      double h = 1e-7 * std::max(1.0, std::abs(best.theta[k]));
      std::vector<double> th = best.theta;
      th[k] += h;
      FamilyEval fe2;
      std::vector<double> r2;
      if (!try_eval(th, &fe2, &r2)) {
        th[k] = best.theta[k] - h;
        if (!try_eval(th, &fe2, &r2)) throw ConvergenceError("solve_multi: Jacobian evaluation failed");
        h = -h;
      }
      for (std::size_t row = 0; row < 2 * m; ++row) J[row][k] = (r2[row] - r[row]) / h;
    }

    std::vector<std::vector<double>> JtJ(n, std::vector<double>(n, 0.0));
    std::vector<double> Jtr(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t row = 0; row < 2 * m; ++row) JtJ[a][b] += J[row][a] * J[row][b];
      for (std::size_t row = 0; row < 2 * m; ++row) Jtr[a] += J[row][a] * r[row];
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 25; ++attempt) {
      std::vector<double> step = solve_dense(JtJ, Jtr, mu);
      if (!step.empty()) {
        std::vector<double> th = best.theta;
        for (std::size_t k = 0; k < n; ++k) th[k] -= step[k];
        FamilyEval fe2;
        std::vector<double> r2;
        if (try_eval(th, &fe2, &r2) && norm2sq(r2) < cost) {
          best.theta = th;
          best.fe = std::move(fe2);
          r = std::move(r2);
          cost = norm2sq(r);
          mu = std::max(mu * 0.3, 1e-12);
          stepped = true;
          break;
        }
      }
      mu *= 10.0;
    }
    if (!stepped) break;  // stalled at a least-squares point
  }
  best.residual_norm = norm_inf(r);
  return best;
}

}  // namespace

double total_fraction(const MultiAllocation& multi, double p) {
  double v = 0.0;
  for (const auto& a : multi.allocations) v += eval_allocation(a, p);
  return v;
}

MultiAllocation solve_multi(const Landscape& landscape, const ContractSet& set) {
  validate_set(landscape, set);
  std::size_t m = set.contracts.size();

  MultiAllocation out;
  out.supply = set.s;

  // Independent single-contract solutions.
  std::vector<SolveResult> indep;
  indep.reserve(m);
  double v0 = 0.0;
  for (const auto& cspec : set.contracts) {
    indep.push_back(solve_l2(landscape, cspec.d, set.s, cspec.t));
    v0 += eval_allocation(indep.back().allocation, 0.0);
  }

  if (v0 <= 1.0 + 1e-12) {
    out.case_tag = "decoupled";
    out.decentralizable = true;
    out.p_star = 0.0;
    out.common_slope = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const Allocation& a = indep[j].allocation;
      out.allocations.push_back(a);
      out.c.push_back(eval_allocation(a, 0.0));
      if (const auto* f = std::get_if<L2LinearAllocation>(&a.form))
        out.p_max.push_back(f->p_max);
      else if (const auto* f = std::get_if<L2SaturatedAllocation>(&a.form))
        out.p_max.push_back(f->p_max);
      else
        out.p_max.push_back(kInf);  // flat allocation never reaches zero
      out.residual_norm = std::max(out.residual_norm, indep[j].diagnostics.residual_norm);
    }
    out.note = "independent solutions fit within supply";
    return out;
  }

  // Coupled: fit the common-slope family, initialized from the aggregate
  // single-contract solution.
  double d_tot = 0.0, spend_tot = 0.0;
  for (const auto& cspec : set.contracts) {
    d_tot += cspec.d;
    spend_tot += cspec.t * cspec.d;
  }
  double t_agg = spend_tot / d_tot;

  SolveResult agg;
  try {
    agg = solve_l2(landscape, d_tot, set.s, t_agg);
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(std::string("solve_multi: aggregate problem infeasible: ") + e.what());
  }

  std::vector<double> theta(m + 1, 0.0);
  double q0, w0;
  if (const auto* f = std::get_if<L2SaturatedAllocation>(&agg.allocation.form)) {
    q0 = f->p_max;
    w0 = 1.0 / (static_cast<double>(m) * (f->p_max - f->p_min));
  } else if (const auto* f = std::get_if<L2LinearAllocation>(&agg.allocation.form)) {
    q0 = f->p_max;
    w0 = f->z / static_cast<double>(m);
  } else {
    q0 = landscape.quantile(1.0 - 1e-6);
    w0 = 1.0 / q0;
  }
  // Keep the initial p_star strictly positive.
  w0 = std::max(w0, 1.0001 / (static_cast<double>(m) * q0));
  theta[0] = w0;
  for (std::size_t j = 0; j < m; ++j) theta[1 + j] = q0;

  CommonSlopeFit fit = fit_common_slope(landscape, set, theta);

  out.p_star = fit.fe.p_star;
  out.common_slope = fit.theta[0];
  out.iterations = fit.iterations;
  out.residual_norm = fit.residual_norm;
  out.allocations = fit.fe.allocations;
  for (std::size_t j = 0; j < m; ++j) {
    out.p_max.push_back(fit.theta[1 + j]);
    out.c.push_back(fit.theta[0] * (fit.theta[1 + j] - fit.fe.p_star));
  }
  if (fit.residual_norm < kEqualSlopeTol) {
    out.case_tag = "common_slope";
    out.decentralizable = true;
  } else {
    out.case_tag = "not_decentralizable";
    out.decentralizable = false;
    out.note =
        "coupled optimum has unequal spend multipliers; returning closest common-slope fit";
  }
  return out;
}

std::vector<BidStrategy> decentralize(const std::vector<Allocation>& allocations, double s) {
  if (allocations.empty()) throw std::invalid_argument("decentralize: no allocations");
  if (!(s > 0.0)) throw std::invalid_argument("decentralize: supply must be positive");
  std::size_t m = allocations.size();

  if (m == 1 && (std::holds_alternative<FlatAllocation>(allocations[0].form) ||
                 std::holds_alternative<KlExponentialAllocation>(allocations[0].form) ||
                 std::holds_alternative<KlUnsaturatedAllocation>(allocations[0].form))) {
    // Single contract with a flat or exponential form: H = 1 - a/s exactly,
    // which is the Prop.-1 strategy.
    return {strategy_from_allocation(allocations[0])};
  }

  // Piecewise-linear decomposition of every allocation on a shared grid.
  double top = 0.0;
  std::vector<std::vector<LinearPiece>> pieces(m);
  for (std::size_t j = 0; j < m; ++j) {
    pieces[j] = linear_pieces(allocations[j], kInf);
    for (const auto& pc : pieces[j]) {
      if (pc.m > 1e-9) throw std::invalid_argument("decentralize: allocations must be non-increasing");
      if (pc.hi < kInf) top = std::max(top, pc.hi);
      if (pc.hi == kInf && (pc.c + pc.m * pc.lo) > 1e-12)
        throw std::invalid_argument(
            "decentralize: allocation never decays to zero; no finite-bid distribution exists");
    }
  }
  if (top <= 0.0) throw std::invalid_argument("decentralize: allocations vanish everywhere");

  auto value_at = [&](std::size_t j, double p) { return eval_allocation(allocations[j], p); };
  auto slope_at = [&](std::size_t j, double p) {
    for (const auto& pc : pieces[j])
      if (p >= pc.lo && p < pc.hi) return std::max(0.0, -pc.m);
    return 0.0;
  };

  std::vector<double> cuts{0.0, top};
  for (const auto& cp : pieces)
    for (const auto& pc : cp) {
      if (pc.lo < top) cuts.push_back(pc.lo);
      if (pc.hi < top) cuts.push_back(pc.hi);
    }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-14; }),
             cuts.end());

  // Total fraction V and remaining supply u = 1 - V at the cut points;
  // locate p_star = sup{p : V(p) >= 1}.
  auto V = [&](double p) {
    double v = 0.0;
    for (std::size_t j = 0; j < m; ++j) v += value_at(j, p);
    return v;
  };

  double p_star = -kInf;
  for (std::size_t i = cuts.size(); i-- > 1;) {
    double a = cuts[i - 1], b = cuts[i];
    double ua = 1.0 - V(a), ub = 1.0 - V(b);
    if (ua < -1e-9 && ub < -1e-9)
      throw std::invalid_argument("decentralize: total allocation exceeds supply");
    if (ua <= 1e-15 && ub > 1e-15) {
      double slope = (ub - ua) / (b - a);
      p_star = (slope > 0.0) ? a - ua / slope : a;
      break;
    }
    if (ub <= 1e-15 && i == cuts.size() - 1)
      throw std::invalid_argument("decentralize: supply exhausted at the top of the price range");
  }

  double start = std::max(p_star, 0.0);
  if (p_star == -kInf) start = 0.0;

  // Build ascending segments from start to top, then per-contract suffix
  // exponents.
  struct Seg {
    double lo, hi, u_lo, slope_total;
    std::vector<double> slope_own;
  };
  std::vector<Seg> segs;
  std::vector<double> grid{start};
  for (double cpt : cuts)
    if (cpt > start + 1e-14 && cpt < top - 1e-14) grid.push_back(cpt);
  grid.push_back(top);

  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    Seg sg;
    sg.lo = grid[i];
    sg.hi = grid[i + 1];
    double mid = 0.5 * (sg.lo + sg.hi);
    sg.u_lo = std::max(0.0, 1.0 - V(sg.lo));
    sg.slope_total = 0.0;
    sg.slope_own.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      sg.slope_own[j] = slope_at(j, mid);
      sg.slope_total += sg.slope_own[j];
    }
    segs.push_back(std::move(sg));
  }

  std::vector<BidStrategy> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    PiecewiseExponentBid bid;
    bid.p_star = (p_star == -kInf) ? -kInf : p_star;
    bid.top = top;
    double tail = 0.0;
    std::vector<ExponentSegment> built(segs.size());
    for (std::size_t i = segs.size(); i-- > 0;) {
      const Seg& sg = segs[i];
      ExponentSegment es;
      es.lo = sg.lo;
      es.hi = sg.hi;
      es.u_lo = sg.u_lo;
      es.slope_total = sg.slope_total;
      es.slope_own = sg.slope_own[j];
      es.tail = tail;
      if (sg.slope_total > 0.0 && sg.slope_own[j] > 0.0) {
        double uhi = sg.u_lo + sg.slope_total * (sg.hi - sg.lo);
        if (sg.u_lo <= 0.0)
          tail = -kInf;  // segment starts at exhausted supply: H -> 0
        else
          tail += -(sg.slope_own[j] / sg.slope_total) * (std::log(uhi) - std::log(sg.u_lo));
      }
      built[i] = es;
    }
    bid.segments = std::move(built);
    BidStrategy strat;
    strat.form = std::move(bid);
    strat.bid_probability = 1.0 - std::get<PiecewiseExponentBid>(strat.form).cdf(0.0);
    out[j] = std::move(strat);
  }
  return out;
}

DecentralizableReport is_decentralizable(const Landscape& landscape, const ContractSet& set) {
  DecentralizableReport rep;
  rep.solution = solve_multi(landscape, set);
  rep.decentralizable = rep.solution.decentralizable;
  if (rep.solution.case_tag == "decoupled") {
    rep.diagnosis = "independent solutions fit within supply (p_star = 0)";
  } else if (rep.solution.case_tag == "common_slope") {
    rep.diagnosis = "common-slope system solved; equal spend multipliers";
  } else {
    std::ostringstream msg;
    msg << "unequal slope multipliers; common-slope residual " << rep.solution.residual_norm
        << " exceeds tolerance " << kEqualSlopeTol;
    rep.diagnosis = msg.str();
  }
  return rep;
}

ScaleSpendsResult scale_spends(const Landscape& landscape, const ContractSet& set) {
  auto scaled_set = [&](double kappa) {
    ContractSet s2 = set;
    for (auto& cspec : s2.contracts) cspec.t *= kappa;
    return s2;
  };
  auto decentralizable_at = [&](double kappa) {
    return solve_multi(landscape, scaled_set(kappa)).decentralizable;
  };

  ScaleSpendsResult out;
  if (decentralizable_at(1.0)) {
    out.kappa = 1.0;
    out.scaled = set;
    out.solution = solve_multi(landscape, set);
    return out;
  }

  double lo = 1.0, hi = 2.0;
  while (!decentralizable_at(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1000.0)
      throw ConvergenceError("scale_spends: no decentralizable scaling below kappa = 1000");
  }
  while (hi - lo > 1e-6) {
    double mid = 0.5 * (lo + hi);
    if (decentralizable_at(mid))
      hi = mid;
    else
      lo = mid;
  }
  out.kappa = hi;
  out.scaled = scaled_set(hi);
  out.solution = solve_multi(landscape, out.scaled);
  return out;
}

}  // namespace repalloc
