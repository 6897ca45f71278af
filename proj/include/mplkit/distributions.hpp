#pragma once

// Inverse Gaussian and generalized extreme value (GEV) distributions.
//
// GEV conventions: m = 1 + xi (y - loc) / scale must be positive. Outside the support the
// log-density is -infinity and the distribution function is clamped to 0 or 1 depending on
// which end of the support y falls past. Bad parameters (scale <= 0, |xi| < 1e-8) throw.

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "mplkit/errors.hpp"
#include "mplkit/random.hpp"

namespace mplkit {

inline constexpr double kShapeGuard = 1e-8;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct IgParams {
  double mu;
  double lambda;

  IgParams(double mean, double dispersion) : mu(mean), lambda(dispersion) {
    if (!(mu > 0.0) || !(lambda > 0.0)) throw DomainError("IG parameters must be positive");
  }
};

struct GevParams3 {
  double loc;
  double scale;
  double shape;

  GevParams3(double location, double sc, double xi) : loc(location), scale(sc), shape(xi) {
    if (!(scale > 0.0)) throw DomainError("GEV scale must be positive");
    if (!(std::abs(shape) >= kShapeGuard)) throw ShapeTooSmallError(shape);
  }
};

// ---------------------------------------------------------------------------------------------
// Inverse Gaussian

inline double ig_logpdf(double x, const IgParams& p) {
  if (!(x > 0.0)) throw DomainError("IG log-density requires x > 0");
  const double d = x - p.mu;
  return 0.5 * std::log(p.lambda / (2.0 * std::numbers::pi)) - 1.5 * std::log(x) -
         p.lambda * (d / p.mu) * (d / p.mu) / (2.0 * x);
}

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double ig_cdf(double x, const IgParams& p) {
  if (!(x > 0.0)) return 0.0;
  const double r = std::sqrt(p.lambda / x);
  const double first = std_normal_cdf(r * (x / p.mu - 1.0));
  // exp(2 lambda / mu) * Phi(-r (x/mu + 1)), combined in log space against overflow
  const double tail = std_normal_cdf(-r * (x / p.mu + 1.0));
  const double second = tail > 0.0 ? std::exp(2.0 * p.lambda / p.mu + std::log(tail)) : 0.0;
  return std::min(1.0, first + second);
}

// Michael, Schucany and Haas transformation: one normal and one uniform per draw.
inline double ig_draw(const IgParams& p, Rng& rng) {
  std::normal_distribution<double> normal;
  const double nu = normal(rng);
  const double y = nu * nu;
  const double mu = p.mu;
  // larger root first (no cancellation); the smaller one is mu^2 / larger
  const double big = mu + mu * mu * y / (2.0 * p.lambda) +
                     mu / (2.0 * p.lambda) * std::sqrt(4.0 * mu * p.lambda * y + mu * mu * y * y);
  const double small = mu * mu / big;
  const double u = uniform_open(rng);
  return u <= mu / (mu + small) ? small : big;
}

inline std::vector<double> ig_sample(std::size_t n, const IgParams& p, Rng& rng) {
  if (n < 1) throw DomainError("ig_sample requires n >= 1");
  std::vector<double> xs(n);
  for (auto& x : xs) x = ig_draw(p, rng);
  return xs;
}

// ---------------------------------------------------------------------------------------------
// GEV

inline double gev_m(double y, const GevParams3& p) { return 1.0 + p.shape * (y - p.loc) / p.scale; }

inline double gev_logpdf(double y, const GevParams3& p) {
  const double m = gev_m(y, p);
  if (!(m > 0.0)) return kNegInf;
  const double inv_xi = 1.0 / p.shape;
  const double log_m = std::log(m);
  return -std::log(p.scale) - (inv_xi + 1.0) * log_m - std::exp(-inv_xi * log_m);
}

inline double gev_cdf(double y, const GevParams3& p) {
  const double m = gev_m(y, p);
  if (!(m > 0.0)) return p.shape > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::pow(m, -1.0 / p.shape));
}

// Computed as 1 - gev_cdf so the pair sums to one exactly.
inline double gev_survivor(double y, const GevParams3& p) { return 1.0 - gev_cdf(y, p); }

inline double gev_quantile(double u, const GevParams3& p) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("GEV quantile requires 0 < u < 1");
  return p.loc + p.scale * std::expm1(-p.shape * std::log(-std::log(u))) / p.shape;
}

inline double gev_draw(const GevParams3& p, Rng& rng) { return gev_quantile(uniform_open(rng), p); }

}  // namespace mplkit
