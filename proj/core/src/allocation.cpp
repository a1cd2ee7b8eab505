#include "repalloc/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace repalloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

struct EvalVisitor {
  double p;

  double operator()(const FlatAllocation& f) const { return clamp01(f.level); }

  double operator()(const L2LinearAllocation& f) const {
    if (p >= f.p_max) return 0.0;
    return clamp01(f.z * (f.p_max - p));
  }

  double operator()(const L2SaturatedAllocation& f) const {
    if (p <= f.p_min) return 1.0;
    if (p >= f.p_max) return 0.0;
    return (f.p_max - p) / (f.p_max - f.p_min);
  }

  double operator()(const KlExponentialAllocation& f) const {
    if (p <= f.p0) return 1.0;
    return std::exp(f.lambda * (f.p0 - p));
  }

  double operator()(const KlUnsaturatedAllocation& f) const {
    return clamp01(f.scale * std::exp(-f.lambda * std::max(p, 0.0)));
  }

  double operator()(const TabulatedAllocation& f) const {
    const auto& g = f.grid;
    if (g.empty()) return 0.0;
    if (p <= g.front().first) return clamp01(g.front().second);
    if (p >= g.back().first) return clamp01(g.back().second);
    auto it = std::upper_bound(g.begin(), g.end(), p,
                               [](double v, const auto& node) { return v < node.first; });
    const auto& [pb, vb] = *it;
    const auto& [pa, va] = *(it - 1);
    if (pb == pa) return clamp01(vb);
    double w = (p - pa) / (pb - pa);
    return clamp01(va + w * (vb - va));
  }
};

// integral over [lo, hi] of (c + m p) f(p) dp, clamped to the window.
double linear_weight(const Landscape& L, double lo, double hi, double c, double m) {
  if (!(hi > lo)) return 0.0;
  double mass = L.partial_moment(lo, hi, 0).value;
  double m1 = L.partial_moment(lo, hi, 1).value;
  return c * mass + m * m1;
}

// integral over [lo, hi] of p (c + m p) f(p) dp.
double linear_spend(const Landscape& L, double lo, double hi, double c, double m) {
  if (!(hi > lo)) return 0.0;
  double m1 = L.partial_moment(lo, hi, 1).value;
  double m2 = L.partial_moment(lo, hi, 2).value;
  return c * m1 + m * m2;
}

struct MomentVisitor {
  const Landscape& L;
  int order;  // 0: demand fraction, 1: spend fraction

  double weighted(double lo, double hi, double c, double m) const {
    return order == 0 ? linear_weight(L, lo, hi, c, m) : linear_spend(L, lo, hi, c, m);
  }

  double operator()(const FlatAllocation& f) const {
    return f.level * (order == 0 ? 1.0 : L.mean());
  }

  double operator()(const L2LinearAllocation& f) const {
    if (f.z <= 0.0 || f.p_max <= 0.0) return 0.0;
    double knee = std::max(0.0, f.p_max - 1.0 / f.z);  // fraction saturates below this
    double v = weighted(-kInf, knee, 1.0, 0.0);
    v += weighted(knee, f.p_max, f.z * f.p_max, -f.z);
    return v;
  }

  double operator()(const L2SaturatedAllocation& f) const {
    double v = weighted(-kInf, f.p_min, 1.0, 0.0);
    if (f.p_max > f.p_min) {
      double z = 1.0 / (f.p_max - f.p_min);
      v += weighted(f.p_min, f.p_max, z * f.p_max, -z);
    }
    return v;
  }

  double operator()(const KlExponentialAllocation& f) const {
    double v = weighted(-kInf, f.p0, 1.0, 0.0);
    return v + L.tilted_moment(f.lambda, f.p0, order);
  }

  double operator()(const KlUnsaturatedAllocation& f) const {
    return f.scale * L.tilted_moment(f.lambda, 0.0, order);
  }

  double operator()(const TabulatedAllocation& f) const {
    const auto& g = f.grid;
    if (g.empty()) return 0.0;
    double v = weighted(-kInf, g.front().first, g.front().second, 0.0);
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
      auto [pa, va] = g[i];
      auto [pb, vb] = g[i + 1];
      if (pb <= pa) continue;
      double m = (vb - va) / (pb - pa);
      v += weighted(pa, pb, va - m * pa, m);
    }
    v += weighted(g.back().first, kInf, g.back().second, 0.0);
    return v;
  }
};

}  // namespace

double eval_allocation(const Allocation& a, double p) {
  return std::visit(EvalVisitor{p}, a.form);
}

double expected_demand_fraction(const Allocation& a, const Landscape& landscape) {
  return std::visit(MomentVisitor{landscape, 0}, a.form);
}

double expected_spend_fraction(const Allocation& a, const Landscape& landscape) {
  return std::visit(MomentVisitor{landscape, 1}, a.form);
}

std::vector<LinearPiece> linear_pieces(const Allocation& a, double p_cap) {
  std::vector<LinearPiece> out;
  auto push = [&](double lo, double hi, double c, double m) {
    lo = std::max(lo, 0.0);
    hi = std::min(hi, p_cap);
    if (hi > lo) out.push_back({lo, hi, c, m});
  };

  if (const auto* f = std::get_if<FlatAllocation>(&a.form)) {
    push(0.0, p_cap, f->level, 0.0);
  } else if (const auto* f = std::get_if<L2LinearAllocation>(&a.form)) {
    double knee = std::max(0.0, f->p_max - 1.0 / f->z);
    push(0.0, knee, 1.0, 0.0);
    push(knee, f->p_max, f->z * f->p_max, -f->z);
    push(f->p_max, p_cap, 0.0, 0.0);
  } else if (const auto* f = std::get_if<L2SaturatedAllocation>(&a.form)) {
    push(0.0, f->p_min, 1.0, 0.0);
    if (f->p_max > f->p_min) {
      double z = 1.0 / (f->p_max - f->p_min);
      push(f->p_min, f->p_max, z * f->p_max, -z);
    }
    push(f->p_max, p_cap, 0.0, 0.0);
  } else if (const auto* f = std::get_if<TabulatedAllocation>(&a.form)) {
    const auto& g = f->grid;
    if (g.empty()) {
      push(0.0, p_cap, 0.0, 0.0);
    } else {
      push(0.0, g.front().first, g.front().second, 0.0);
      for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        auto [pa, va] = g[i];
        auto [pb, vb] = g[i + 1];
        if (pb <= pa) continue;
        double m = (vb - va) / (pb - pa);
        push(pa, pb, va - m * pa, m);
      }
      push(g.back().first, p_cap, g.back().second, 0.0);
    }
  } else {
    throw std::invalid_argument("linear_pieces: allocation form is not piecewise linear");
  }
  return out;
}

}  // namespace repalloc
