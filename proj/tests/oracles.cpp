#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace oracle {

namespace {

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive(const std::function<double(double)>& g, double a, double b, double fa, double fm,
                double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = g(lm), frm = g(rm);
  double left = simpson(a, m, fa, flm, fm);
  double right = simpson(m, b, fm, frm, fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& g, double lo, double hi, double tol) {
  if (!(hi > lo)) return 0.0;
  double m = 0.5 * (lo + hi);
  double fa = g(lo), fm = g(m), fb = g(hi);
  double whole = simpson(lo, hi, fa, fm, fb);
  return adaptive(g, lo, hi, fa, fm, fb, whole, tol, 48);
}

double integrate_against(const repalloc::Landscape& landscape,
                         const std::function<double(double)>& g, double lo, double hi,
                         const std::vector<double>& breaks) {
  using repalloc::LandscapeKind;
  lo = std::max(lo, landscape.support_lo());
  hi = std::min(hi, landscape.support_hi());
  if (!(hi > lo) && landscape.kind() != LandscapeKind::Empirical) return 0.0;

  if (landscape.kind() == LandscapeKind::Empirical) {
    const auto& xs = landscape.empirical_params().sorted;
    double n1 = static_cast<double>(xs.size() - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      double xa = xs[i], xb = xs[i + 1];
      if (xb == xa) {
        if (xa >= lo && xa <= hi) acc += g(xa) / n1;
        continue;
      }
      double a = std::max(xa, lo), b = std::min(xb, hi);
      if (!(b > a)) continue;
      double density = 1.0 / (n1 * (xb - xa));
      // split at kinks of g inside the segment
      std::vector<double> nodes{a, b};
      for (double c : breaks)
        if (c > a && c < b) nodes.push_back(c);
      std::sort(nodes.begin(), nodes.end());
      for (std::size_t k = 0; k + 1 < nodes.size(); ++k)
        acc += density * integrate(g, nodes[k], nodes[k + 1], 1e-14);
    }
    return acc;
  }

  // analytic kinds: substitute p = quantile(q) so the weight becomes flat
  double qlo = landscape.cdf(lo), qhi = landscape.cdf(hi);
  if (!(qhi > qlo)) return 0.0;
  std::vector<double> qnodes{qlo, qhi};
  for (double c : breaks) {
    if (c > lo && c < hi) {
      double q = landscape.cdf(c);
      if (q > qlo && q < qhi) qnodes.push_back(q);
    }
  }
  std::sort(qnodes.begin(), qnodes.end());
  auto integrand = [&](double q) { return g(landscape.quantile(q)); };
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < qnodes.size(); ++k)
    acc += integrate(integrand, qnodes[k], qnodes[k + 1], 1e-13);
  return acc;
}

std::vector<double> allocation_breaks(const repalloc::Allocation& a) {
  using namespace repalloc;
  std::vector<double> out;
  if (const auto* lin = std::get_if<L2LinearAllocation>(&a.form)) {
    double sat = lin->p_max - 1.0 / lin->z;
    if (sat > 0.0) out.push_back(sat);
    out.push_back(lin->p_max);
  } else if (const auto* satf = std::get_if<L2SaturatedAllocation>(&a.form)) {
    out.push_back(satf->p_min);
    out.push_back(satf->p_max);
  } else if (const auto* ke = std::get_if<KlExponentialAllocation>(&a.form)) {
    out.push_back(ke->p0);
  } else if (const auto* tab = std::get_if<TabulatedAllocation>(&a.form)) {
    for (const auto& node : tab->grid) out.push_back(node.first);
  }
  return out;
}

double allocation_extent(const repalloc::Allocation& a, const repalloc::Landscape& landscape) {
  using namespace repalloc;
  double inf = std::numeric_limits<double>::infinity();
  double ext = inf;
  if (const auto* lin = std::get_if<L2LinearAllocation>(&a.form)) {
    ext = lin->p_max;
  } else if (const auto* satf = std::get_if<L2SaturatedAllocation>(&a.form)) {
    ext = satf->p_max;
  } else if (const auto* ke = std::get_if<KlExponentialAllocation>(&a.form)) {
    ext = ke->lambda > 0.0 ? ke->p0 + 45.0 / ke->lambda : inf;
  } else if (const auto* ku = std::get_if<KlUnsaturatedAllocation>(&a.form)) {
    ext = ku->lambda > 0.0 ? 45.0 / ku->lambda : inf;
  } else if (const auto* tab = std::get_if<TabulatedAllocation>(&a.form)) {
    if (!tab->grid.empty() && tab->grid.back().second == 0.0) ext = tab->grid.back().first;
  }
  return std::min(ext, landscape.support_hi());
}

double demand_quad(const repalloc::Allocation& a, const repalloc::Landscape& landscape) {
  auto g = [&](double p) { return repalloc::eval_allocation(a, p); };
  return integrate_against(landscape, g, 0.0, allocation_extent(a, landscape),
                           allocation_breaks(a));
}

double spend_quad(const repalloc::Allocation& a, const repalloc::Landscape& landscape) {
  auto g = [&](double p) { return p * repalloc::eval_allocation(a, p); };
  return integrate_against(landscape, g, 0.0, allocation_extent(a, landscape),
                           allocation_breaks(a));
}

double kl_quad(const repalloc::Allocation& a, const repalloc::Landscape& landscape) {
  double scale = a.supply / a.demand;
  auto g = [&](double p) {
    double r = scale * repalloc::eval_allocation(a, p);
    return r > 0.0 ? r * std::log(r) : 0.0;
  };
  return integrate_against(landscape, g, 0.0, landscape.support_hi(), allocation_breaks(a));
}

WindowSearchResult window_search(const repalloc::Landscape& landscape, double d, double s,
                                 double t, int nx, int ny, double x_hi, double y_lo,
                                 double y_hi) {
  std::vector<double> xs(nx), ys(ny);
  for (int i = 0; i < nx; ++i) xs[i] = x_hi * i / (nx - 1);
  for (int j = 0; j < ny; ++j) ys[j] = y_lo + (y_hi - y_lo) * j / (ny - 1);

  std::vector<double> nodes = xs;
  nodes.insert(nodes.end(), ys.begin(), ys.end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  // cumulative cdf / first / second moments at every node by quadrature
  std::size_t nn = nodes.size();
  std::vector<double> F(nn), M1(nn), M2(nn);
  auto pf = [&](double p) { return p * landscape.pdf(p); };
  auto ppf = [&](double p) { return p * p * landscape.pdf(p); };
  double m1 = 0.0, m2 = 0.0, prev = std::max(0.0, landscape.support_lo());
  for (std::size_t k = 0; k < nn; ++k) {
    double node = nodes[k];
    if (node > prev) {
      m1 += integrate(pf, prev, node, 1e-13);
      m2 += integrate(ppf, prev, node, 1e-13);
      prev = node;
    }
    F[k] = landscape.cdf(node);
    M1[k] = m1;
    M2[k] = m2;
  }
  auto index_of = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), v) -
                                    nodes.begin());
  };

  double ds = d / s, spend_target = t * ds;
  WindowSearchResult best;
  best.score = std::numeric_limits<double>::infinity();
  best.dx = xs[1] - xs[0];
  best.dy = ys[1] - ys[0];
  for (int i = 0; i < nx; ++i) {
    std::size_t ix = index_of(xs[i]);
    for (int j = 0; j < ny; ++j) {
      if (!(ys[j] - xs[i] > 1e-12)) continue;
      std::size_t iy = index_of(ys[j]);
      double x = xs[i], y = ys[j];
      double dF = F[iy] - F[ix], dM1 = M1[iy] - M1[ix], dM2 = M2[iy] - M2[ix];
      double demand = F[ix] + (y * dF - dM1) / (y - x);
      double spend = M1[ix] + (y * dM1 - dM2) / (y - x);
      double rd = (demand - ds) / ds;
      double rs = (spend - spend_target) / spend_target;
      double score = rd * rd + rs * rs;
      if (score < best.score) {
        best.score = score;
        best.x = x;
        best.y = y;
      }
    }
  }
  return best;
}

namespace {

// Projection of y onto {0 <= v <= 1, sum v <= 1}: v_j = clip(y_j - mu, 0, 1).
void project_capped(const std::vector<double>& y, std::vector<double>& v) {
  double sum = 0.0, ymax = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    v[j] = std::clamp(y[j], 0.0, 1.0);
    sum += v[j];
    ymax = std::max(ymax, y[j]);
  }
  if (sum <= 1.0) return;
  double mu_lo = 0.0, mu_hi = ymax;  // sum(mu_hi) = 0 < 1 < sum(mu_lo)
  for (int it = 0; it < 120; ++it) {
    double mu = 0.5 * (mu_lo + mu_hi);
    double smu = 0.0;
    for (double yj : y) smu += std::clamp(yj - mu, 0.0, 1.0);
    (smu > 1.0 ? mu_lo : mu_hi) = mu;
  }
  double mu = 0.5 * (mu_lo + mu_hi);
  for (std::size_t j = 0; j < y.size(); ++j) v[j] = std::clamp(y[j] - mu, 0.0, 1.0);
}

// Gaussian elimination with partial pivoting; a is n x n row-major.
bool solve_linear(std::vector<double> a, std::vector<double> b, std::vector<double>& x) {
  std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (std::abs(a[piv * n + col]) < 1e-300) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = a[r * n + col] / a[col * n + col];
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t c = r + 1; c < n; ++c) acc -= a[r * n + c] * x[c];
    x[r] = acc / a[r * n + r];
  }
  return true;
}

}  // namespace

CappedQpResult capped_qp(const repalloc::Landscape& landscape, const std::vector<double>& r,
                         const std::vector<double>& spend_frac, int n_cells,
                         std::vector<double> alpha0, std::vector<double> beta0) {
  std::size_t m = r.size();
  CappedQpResult out;
  out.cell_mass = 1.0 / n_cells;
  out.pbar.resize(n_cells);
  for (int k = 0; k < n_cells; ++k)
    out.pbar[k] = landscape.quantile((k + 0.5) / n_cells);

  std::vector<double> theta(2 * m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = alpha0[j];
    theta[m + j] = beta0[j];
  }

  std::vector<double> yj(m), vj(m);
  auto residual = [&](const std::vector<double>& th, std::vector<double>& R) {
    std::vector<double> demand(m, 0.0), spend(m, 0.0);
    for (int k = 0; k < n_cells; ++k) {
      double p = out.pbar[k];
      for (std::size_t j = 0; j < m; ++j) yj[j] = r[j] + th[j] - th[m + j] * p;
      project_capped(yj, vj);
      for (std::size_t j = 0; j < m; ++j) {
        demand[j] += out.cell_mass * vj[j];
        spend[j] += out.cell_mass * p * vj[j];
      }
    }
    R.resize(2 * m);
    for (std::size_t j = 0; j < m; ++j) {
      R[j] = demand[j] - r[j];
      R[m + j] = spend[j] - spend_frac[j];
    }
  };
  auto norm = [](const std::vector<double>& R) {
    double n = 0.0;
    for (double v : R) n = std::max(n, std::abs(v));
    return n;
  };

  std::vector<double> R, Rtrial, delta, thtrial(2 * m);
  residual(theta, R);
  for (out.iterations = 0; out.iterations < 300; ++out.iterations) {
    if (norm(R) < 1e-10) {
      out.converged = true;
      break;
    }
    // finite-difference Jacobian
    std::vector<double> J(4 * m * m);
    for (std::size_t c = 0; c < 2 * m; ++c) {
      double h = 1e-6 * std::max(1.0, std::abs(theta[c]));
      thtrial = theta;
      thtrial[c] += h;
      residual(thtrial, Rtrial);
      for (std::size_t rr = 0; rr < 2 * m; ++rr) J[rr * 2 * m + c] = (Rtrial[rr] - R[rr]) / h;
    }
    std::vector<double> negR(2 * m);
    for (std::size_t i = 0; i < 2 * m; ++i) negR[i] = -R[i];
    if (!solve_linear(J, negR, delta)) break;
    double step = 1.0, base = norm(R);
    bool accepted = false;
    for (int halving = 0; halving < 50; ++halving) {
      for (std::size_t i = 0; i < 2 * m; ++i) thtrial[i] = theta[i] + step * delta[i];
      residual(thtrial, Rtrial);
      if (norm(Rtrial) < base) {
        theta = thtrial;
        R = Rtrial;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  out.residual = norm(R);
  if (out.residual < 1e-8) out.converged = true;

  out.alpha.assign(theta.begin(), theta.begin() + m);
  out.beta.assign(theta.begin() + m, theta.end());
  out.v.assign(m, std::vector<double>(n_cells, 0.0));
  out.objective = 0.0;
  for (int k = 0; k < n_cells; ++k) {
    double p = out.pbar[k];
    for (std::size_t j = 0; j < m; ++j) yj[j] = r[j] + theta[j] - theta[m + j] * p;
    project_capped(yj, vj);
    for (std::size_t j = 0; j < m; ++j) {
      out.v[j][k] = vj[j];
      out.objective += out.cell_mass * (vj[j] - r[j]) * (vj[j] - r[j]);
    }
  }
  return out;
}

double capped_qp_objective(const CappedQpResult& grid,
                           const std::vector<std::function<double(double)>>& fractions,
                           const std::vector<double>& r) {
  double acc = 0.0;
  for (std::size_t k = 0; k < grid.pbar.size(); ++k) {
    for (std::size_t j = 0; j < fractions.size(); ++j) {
      double v = fractions[j](grid.pbar[k]);
      acc += grid.cell_mass * (v - r[j]) * (v - r[j]);
    }
  }
  return acc;
}

KlWindowResult kl_window_search(const repalloc::Landscape& landscape, double d, double s,
                                double t) {
  double ds = d / s, spend_target = t * ds;
  double hi = landscape.support_hi();

  auto demand_at = [&](double p0, double lambda) {
    auto g = [&](double p) { return std::exp(lambda * (p0 - p)); };
    double ext = lambda > 0.0 ? std::min(hi, p0 + 45.0 / lambda) : hi;
    return landscape.cdf(p0) + integrate_against(landscape, g, p0, ext, {});
  };
  auto spend_at = [&](double p0, double lambda) {
    auto tail = [&](double p) { return p * std::exp(lambda * (p0 - p)); };
    double ext = lambda > 0.0 ? std::min(hi, p0 + 45.0 / lambda) : hi;
    auto head = [&](double p) { return p; };
    return integrate_against(landscape, head, 0.0, p0, {}) +
           integrate_against(landscape, tail, p0, ext, {});
  };
  // demand is strictly decreasing in lambda; bisect to match d/s
  auto lambda_for = [&](double p0) {
    double lo = 0.0, up = 1.0;
    while (demand_at(p0, up) > ds && up < 1e9) up *= 2.0;
    for (int it = 0; it < 90; ++it) {
      double mid = 0.5 * (lo + up);
      (demand_at(p0, mid) > ds ? lo : up) = mid;
    }
    return 0.5 * (lo + up);
  };
  auto spend_residual = [&](double p0) { return spend_at(p0, lambda_for(p0)) - spend_target; };

  // bracket a sign change of the spend residual in p0, then bisect
  double p0_hi = landscape.quantile(ds) * (1.0 - 1e-9);
  int scan = 48;
  double prev_p0 = 0.0, prev_res = spend_residual(0.0);
  double blo = -1.0, bhi = -1.0;
  for (int i = 1; i <= scan; ++i) {
    double p0 = p0_hi * i / scan;
    double res = spend_residual(p0);
    if ((prev_res <= 0.0) != (res <= 0.0)) {
      blo = prev_p0;
      bhi = p0;
      break;
    }
    prev_p0 = p0;
    prev_res = res;
  }
  if (blo < 0.0) throw std::runtime_error("kl_window_search: no spend bracket found");
  double flo = spend_residual(blo);
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (blo + bhi);
    double fmid = spend_residual(mid);
    if ((flo <= 0.0) == (fmid <= 0.0)) {
      blo = mid;
      flo = fmid;
    } else {
      bhi = mid;
    }
  }
  KlWindowResult out;
  out.p0 = 0.5 * (blo + bhi);
  out.lambda = lambda_for(out.p0);
  return out;
}

}  // namespace oracle
