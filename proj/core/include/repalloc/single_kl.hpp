#pragma once

#include "repalloc/landscape.hpp"
#include "repalloc/solver_types.hpp"

namespace repalloc {

// Most representative allocation under the KL objective: minimizes
// KL(a f / d || f) subject to delivering d of s impressions at spend at
// most t per impression. Same feasibility handling as solve_l2.
// Numeric path: outer bisection on the tilt rate lambda, inner solve for
// the saturation point p0 (warm-started, since p0 is continuous in lambda);
// the spend residual drives the outer search.
SolveResult solve_kl(const Landscape& landscape, double d, double s, double t);

// KL divergence between the served-price density a(p) f(p) / d and the
// landscape density f: integral of f (a/d) log(a/d) dp, with a = s * value.
// Uses the allocation's stored supply and demand.
double kl_divergence(const Allocation& allocation, const Landscape& landscape);

struct KlClosedForm {
  Allocation allocation;
  double kl_value = 0.0;
};

// Exponential-landscape closed form, valid for d/(s gamma) <= t <= 1/gamma:
// lambda = 1/t - gamma, tilt normalizer z = gamma t, scale = (d/s)/z, and
// optimal divergence gamma t - 1 - log(gamma t).
KlClosedForm kl_closed_form_exponential(double gamma, double d, double s, double t);

}  // namespace repalloc
