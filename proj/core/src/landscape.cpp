#include "repalloc/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "quad.hpp"

namespace repalloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTailMass = 1e-12;  // truncation mass for unbounded supports

const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);

double norm_cdf(double z) {
  if (z == -kInf) return 0.0;
  if (z == kInf) return 1.0;
  return boost::math::cdf(kStdNormal, z);
}

double norm_quantile(double q) { return boost::math::quantile(kStdNormal, q); }

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// eta * integral of p^k exp(-eta (p - a)) dp over [a, b], via the
// integration-by-parts recursion. b may be +infinity. All exponents are
// nonpositive, so nothing overflows for large eta.
double exp_poly_integral(double eta, double a, double b, int k) {
  double wb = (b == kInf) ? 0.0 : std::exp(-eta * (b - a));
  double val = 1.0 - wb;  // k = 0
  for (int j = 1; j <= k; ++j) {
    // log-space keeps b^j * wb from turning into inf * 0 for huge finite b
    double bterm = 0.0;
    if (b != kInf && wb > 0.0 && b > 0.0) bterm = std::exp(j * std::log(b) - eta * (b - a));
    val = std::pow(a, j) - bterm + (static_cast<double>(j) / eta) * val;
  }
  return val;
}

// integral of p^k exp(lambda (p0 - p)) dp over [a, b] for a finite segment,
// lambda > 0, a >= p0 so weights stay in (0, 1].
double tilted_segment_integral(double lambda, double p0, double a, double b, int k) {
  double wa = std::exp(lambda * (p0 - a));
  double wb = std::exp(lambda * (p0 - b));
  double val = (wa - wb) / lambda;  // k = 0
  for (int j = 1; j <= k; ++j) {
    val = (std::pow(a, j) * wa - std::pow(b, j) * wb) / lambda +
          (static_cast<double>(j) / lambda) * val;
  }
  return val;
}

double ipow(double x, int k) {
  double v = 1.0;
  for (int j = 0; j < k; ++j) v *= x;
  return v;
}

}  // namespace

Landscape::Landscape(Params params) : params_(std::move(params)) {
  switch (kind()) {
    case LandscapeKind::Lognormal: {
      const auto& p = lognormal_params();
      support_hi_ = std::exp(p.mu + p.sigma * norm_quantile(1.0 - kTailMass));
      break;
    }
    case LandscapeKind::Exponential:
      support_hi_ = -std::log(kTailMass) / exponential_params().gamma;
      break;
    case LandscapeKind::Uniform:
      support_hi_ = uniform_params().hi;
      break;
    case LandscapeKind::Empirical: {
      const auto& xs = empirical_params().sorted;
      support_hi_ = xs.back();
      degenerate_ = (xs.front() == xs.back());
      break;
    }
  }
}

Landscape Landscape::lognormal(double mu, double sigma) {
  require(std::isfinite(mu), "lognormal: mu must be finite");
  require(std::isfinite(sigma) && sigma > 0.0, "lognormal: sigma must be positive");
  return Landscape(LognormalParams{mu, sigma});
}

Landscape Landscape::exponential(double gamma) {
  require(std::isfinite(gamma) && gamma > 0.0, "exponential: gamma must be positive");
  return Landscape(ExponentialParams{gamma});
}

Landscape Landscape::uniform(double lo, double hi) {
  require(std::isfinite(lo) && std::isfinite(hi), "uniform: bounds must be finite");
  require(lo >= 0.0, "uniform: prices cannot be negative");
  require(hi > lo, "uniform: hi must exceed lo");
  return Landscape(UniformParams{lo, hi});
}

Landscape Landscape::empirical(std::span<const double> prices) {
  require(prices.size() >= 2, "empirical: need at least 2 samples");
  std::vector<double> xs(prices.begin(), prices.end());
  for (double x : xs) {
    require(std::isfinite(x), "empirical: samples must be finite");
    require(x >= 0.0, "empirical: prices cannot be negative");
  }
  std::sort(xs.begin(), xs.end());
  return Landscape(EmpiricalParams{std::move(xs)});
}

Landscape fit_empirical(std::span<const double> prices) { return Landscape::empirical(prices); }

LandscapeKind Landscape::kind() const {
  return static_cast<LandscapeKind>(params_.index());
}

const LognormalParams& Landscape::lognormal_params() const { return std::get<LognormalParams>(params_); }
const ExponentialParams& Landscape::exponential_params() const { return std::get<ExponentialParams>(params_); }
const UniformParams& Landscape::uniform_params() const { return std::get<UniformParams>(params_); }
const EmpiricalParams& Landscape::empirical_params() const { return std::get<EmpiricalParams>(params_); }

bool Landscape::degenerate() const { return degenerate_; }

double Landscape::support_lo() const {
  switch (kind()) {
    case LandscapeKind::Lognormal:
    case LandscapeKind::Exponential:
      return 0.0;
    case LandscapeKind::Uniform:
      return uniform_params().lo;
    case LandscapeKind::Empirical:
      return empirical_params().sorted.front();
  }
  return 0.0;
}

double Landscape::support_hi() const { return support_hi_; }

double Landscape::pdf(double p) const {
  switch (kind()) {
    case LandscapeKind::Lognormal: {
      if (p <= 0.0) return 0.0;
      const auto& lp = lognormal_params();
      double z = (std::log(p) - lp.mu) / lp.sigma;
      return std::exp(-0.5 * z * z) / (p * lp.sigma * std::sqrt(2.0 * M_PI));
    }
    case LandscapeKind::Exponential: {
      if (p < 0.0) return 0.0;
      double g = exponential_params().gamma;
      return g * std::exp(-g * p);
    }
    case LandscapeKind::Uniform: {
      const auto& up = uniform_params();
      return (p >= up.lo && p <= up.hi) ? 1.0 / (up.hi - up.lo) : 0.0;
    }
    case LandscapeKind::Empirical: {
      const auto& xs = empirical_params().sorted;
      if (degenerate_) return p == xs.front() ? kInf : 0.0;
      if (p < xs.front() || p > xs.back()) return 0.0;
      auto it = std::upper_bound(xs.begin(), xs.end(), p);
      std::size_t i = (it == xs.begin()) ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
      if (i + 1 >= xs.size()) i = xs.size() - 2;
      double dx = xs[i + 1] - xs[i];
      if (dx <= 0.0) return kInf;  // repeated sample value: an atom
      return 1.0 / (static_cast<double>(xs.size() - 1) * dx);
    }
  }
  return 0.0;
}

double Landscape::cdf(double p) const {
  switch (kind()) {
    case LandscapeKind::Lognormal: {
      if (p <= 0.0) return 0.0;
      const auto& lp = lognormal_params();
      return norm_cdf((std::log(p) - lp.mu) / lp.sigma);
    }
    case LandscapeKind::Exponential: {
      if (p <= 0.0) return 0.0;
      return -std::expm1(-exponential_params().gamma * p);
    }
    case LandscapeKind::Uniform: {
      const auto& up = uniform_params();
      if (p <= up.lo) return 0.0;
      if (p >= up.hi) return 1.0;
      return (p - up.lo) / (up.hi - up.lo);
    }
    case LandscapeKind::Empirical: {
      const auto& xs = empirical_params().sorted;
      if (p < xs.front()) return 0.0;
      if (p >= xs.back()) return 1.0;
      double n1 = static_cast<double>(xs.size() - 1);
      // Rightmost index with xs[i] <= p keeps the cdf right-continuous
      // across repeated sample values.
      auto it = std::upper_bound(xs.begin(), xs.end(), p);
      std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
      double q = static_cast<double>(i) / n1;
      double dx = xs[i + 1] - xs[i];
      if (dx > 0.0) q += (p - xs[i]) / dx / n1;
      return q;
    }
  }
  return 0.0;
}

double Landscape::quantile(double q) const {
  require(q >= 0.0 && q <= 1.0, "quantile: q must lie in [0, 1]");
  switch (kind()) {
    case LandscapeKind::Lognormal: {
      if (q == 0.0) return 0.0;
      if (q == 1.0) return kInf;
      const auto& lp = lognormal_params();
      return std::exp(lp.mu + lp.sigma * norm_quantile(q));
    }
    case LandscapeKind::Exponential: {
      if (q == 1.0) return kInf;
      return -std::log1p(-q) / exponential_params().gamma;
    }
    case LandscapeKind::Uniform: {
      const auto& up = uniform_params();
      return up.lo + q * (up.hi - up.lo);
    }
    case LandscapeKind::Empirical: {
      const auto& xs = empirical_params().sorted;
      if (degenerate_) return xs.front();
      double u = q * static_cast<double>(xs.size() - 1);
      auto k = static_cast<std::size_t>(u);
      if (k >= xs.size() - 1) return xs.back();
      double frac = u - static_cast<double>(k);
      return xs[k] + frac * (xs[k + 1] - xs[k]);
    }
  }
  return 0.0;
}

PartialMoment Landscape::partial_moment(double lo, double hi, int order) const {
  require(order >= 0, "partial_moment: order must be nonnegative");
  require(lo <= hi, "partial_moment: window must have lo <= hi");
  PartialMoment out{lo, hi, order, 0.0};
  if (!(hi > lo)) return out;

  switch (kind()) {
    case LandscapeKind::Lognormal: {
      const auto& lp = lognormal_params();
      double k = static_cast<double>(order);
      double scale = std::exp(k * lp.mu + 0.5 * k * k * lp.sigma * lp.sigma);
      auto zshift = [&](double p) {
        if (p <= 0.0) return -kInf;
        if (p == kInf) return kInf;
        return (std::log(p) - lp.mu) / lp.sigma - k * lp.sigma;
      };
      out.value = scale * (norm_cdf(zshift(hi)) - norm_cdf(zshift(lo)));
      break;
    }
    case LandscapeKind::Exponential: {
      double g = exponential_params().gamma;
      double a = std::max(lo, 0.0);
      if (hi <= a) break;
      // gamma * int p^k e^{-gamma p} = e^{-gamma a} * [eta-recursion]
      out.value = std::exp(-g * a) * exp_poly_integral(g, a, hi, order);
      break;
    }
    case LandscapeKind::Uniform: {
      const auto& up = uniform_params();
      double a = std::max(lo, up.lo);
      double b = std::min(hi, up.hi);
      if (b <= a) break;
      double k1 = static_cast<double>(order + 1);
      out.value = (std::pow(b, k1) - std::pow(a, k1)) / (k1 * (up.hi - up.lo));
      break;
    }
    case LandscapeKind::Empirical: {
      const auto& xs = empirical_params().sorted;
      // Atoms are assigned to windows half-open on the left, (lo, hi], so
      // windows compose additively and match cdf differences; the support
      // minimum additionally belongs to windows closed at it.
      auto atom_counted = [&](double v) {
        if (v > hi) return false;
        if (v > lo) return true;
        return v == lo && lo <= xs.front();
      };
      if (degenerate_) {
        if (atom_counted(xs.front())) out.value = ipow(xs.front(), order);
        break;
      }
      double n1 = static_cast<double>(xs.size() - 1);
      double k1 = static_cast<double>(order + 1);
      double acc = 0.0;
      for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        double xa = xs[i], xb = xs[i + 1];
        if (xb == xa) {  // repeated value: atom of mass 1/(n-1)
          if (atom_counted(xa)) acc += ipow(xa, order) / n1;
          continue;
        }
        double a = std::max(lo, xa);
        double b = std::min(hi, xb);
        if (b <= a) continue;
        double rho = 1.0 / (n1 * (xb - xa));
        acc += rho * (std::pow(b, k1) - std::pow(a, k1)) / k1;
      }
      out.value = acc;
      break;
    }
  }
  return out;
}

double Landscape::moment(int order) const {
  switch (kind()) {
    case LandscapeKind::Lognormal: {
      const auto& lp = lognormal_params();
      double k = static_cast<double>(order);
      return std::exp(k * lp.mu + 0.5 * k * k * lp.sigma * lp.sigma);
    }
    case LandscapeKind::Exponential: {
      double g = exponential_params().gamma;
      double v = 1.0;
      for (int j = 1; j <= order; ++j) v *= static_cast<double>(j) / g;
      return v;
    }
    default:
      return partial_moment(support_lo(), kInf, order).value;
  }
}

double Landscape::conditional_mean(double lo, double hi) const {
  double mass = partial_moment(lo, hi, 0).value;
  require(mass > 0.0, "conditional_mean: window carries no probability mass");
  return partial_moment(lo, hi, 1).value / mass;
}

double Landscape::tilted_moment(double lambda, double p0, int order) const {
  require(lambda >= 0.0, "tilted_moment: lambda must be nonnegative");
  require(order >= 0, "tilted_moment: order must be nonnegative");
  if (lambda == 0.0) return partial_moment(p0, kInf, order).value;

  switch (kind()) {
    case LandscapeKind::Exponential: {
      double g = exponential_params().gamma;
      double a = std::max(p0, 0.0);
      double eta = lambda + g;
      // gamma/eta * e^{lambda(p0-a) - gamma a} * [eta-recursion on [a, inf)]
      double w = std::exp(lambda * (p0 - a) - g * a);
      return (g / eta) * w * exp_poly_integral(eta, a, kInf, order);
    }
    case LandscapeKind::Uniform: {
      const auto& up = uniform_params();
      double a = std::max(p0, up.lo);
      if (up.hi <= a) return 0.0;
      return tilted_segment_integral(lambda, p0, a, up.hi, order) / (up.hi - up.lo);
    }
    case LandscapeKind::Empirical: {
      const auto& xs = empirical_params().sorted;
      // Same atom convention as partial_moment: (p0, inf), with the support
      // minimum included, so F(p0) + tilted mass never double-counts.
      auto atom_counted = [&](double v) {
        return v > p0 || (v == p0 && p0 <= xs.front());
      };
      if (degenerate_) {
        double x = xs.front();
        return atom_counted(x) ? ipow(x, order) * std::exp(lambda * (p0 - x)) : 0.0;
      }
      double n1 = static_cast<double>(xs.size() - 1);
      double acc = 0.0;
      for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        double xa = xs[i], xb = xs[i + 1];
        if (xb == xa) {
          if (atom_counted(xa)) acc += ipow(xa, order) * std::exp(lambda * (p0 - xa)) / n1;
          continue;
        }
        double a = std::max(p0, xa);
        if (xb <= a) continue;
        double rho = 1.0 / (n1 * (xb - xa));
        acc += rho * tilted_segment_integral(lambda, p0, a, xb, order);
      }
      return acc;
    }
    case LandscapeKind::Lognormal: {
      double a = std::max(p0, 0.0);
      double b = std::max(support_hi_, a + 1.0);
      auto f = [&](double p) {
        return ipow(p, order) * std::exp(lambda * (p0 - p)) * pdf(p);
      };
      return detail::integrate(f, a, b);
    }
  }
  return 0.0;
}

double Landscape::sample_one(Rng& rng) const {
  // Inverse transform keeps sampling deterministic for a given seed and
  // exactly consistent with quantile().
  return quantile(rng.uniform01());
}

std::vector<double> Landscape::sample(Rng& rng, std::size_t n) const {
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(rng));
  return out;
}

}  // namespace repalloc
