#pragma once

// Internal adaptive quadrature wrapper. Not installed; implementation
// files only. Gauss-Kronrod with recursive bisection, absolute floor
// 1e-10 and relative target 1e-8 unless callers tighten it.

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace repalloc::detail {

inline constexpr double kQuadRelTol = 1e-8;

template <typename F>
double integrate(F&& f, double lo, double hi, double rel_tol = kQuadRelTol) {
  if (!(hi > lo)) return 0.0;
  double err = 0.0;
  double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, lo, hi, /*max_depth=*/18, rel_tol, &err);
  return v;
}

}  // namespace repalloc::detail
