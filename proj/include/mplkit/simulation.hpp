#pragma once

// Data generators for the two simulation designs.
//
// Inverse Gaussian: n uncensored IG(mu, lambda) lifetimes.
//
// GEV-AFT: x = (1, x2) with x2 ~ Uniform(0, 1), lifetime T ~ GEV(phi1 + phi2 x2, sigma, xi) and
// censoring time C = c + T' with T' an independent copy of the subject's lifetime law. The
// observed record is y = min(T, C), delta = 1{T <= C}. Since T - T' does not depend on the
// location, P(T > C) is the same for every subject and the shift c is calibrated once per design.
// Covariates, lifetimes and censoring times come from disjoint sub-streams of the seed.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "mplkit/distributions.hpp"
#include "mplkit/errors.hpp"
#include "mplkit/gev_aft.hpp"
#include "mplkit/ig_inference.hpp"
#include "mplkit/random.hpp"

namespace mplkit {

struct SimConfigIG {
  std::size_t n = 10;
  double mu = 2.0;
  double lambda = 4.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 2) throw InputError("IG simulation needs n >= 2");
    IgParams{mu, lambda};
  }
};

struct SimConfigGEV {
  std::size_t n = 20;
  double phi1 = 1.0;
  double phi2 = 1.0;
  double sigma = 1.0;
  double xi = 2.0;
  double target_censor_rate = 0.25;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 4) throw InputError("GEV simulation needs n >= 4");
    if (!(target_censor_rate >= 0.0 && target_censor_rate < 1.0)) {
      throw InputError("censoring rate must lie in [0, 1)");
    }
    GevParams3{0.0, sigma, xi};
  }
};

inline std::vector<double> gen_ig(const SimConfigIG& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, {0x16});
  return ig_sample(cfg.n, IgParams{cfg.mu, cfg.lambda}, rng);
}

// Sub-stream keys inside one GEV dataset.
enum class GevStream : std::uint64_t { covariate = 1, lifetime = 2, censoring = 3 };

struct CensoringCalibration {
  double shift;          // c in C = c + T'
  double achieved_rate;  // Monte Carlo P(T > C) at the returned shift
};

// Fraction of the precomputed T - T' differences exceeding `shift`.
inline double exceedance_fraction(const std::vector<double>& sorted_diffs, double shift) {
  const auto it = std::upper_bound(sorted_diffs.begin(), sorted_diffs.end(), shift);
  return static_cast<double>(sorted_diffs.end() - it) / static_cast<double>(sorted_diffs.size());
}

// T - T' draws for the design's lifetime law, sorted. Common random numbers make the censoring
// fraction a monotone step function of the shift.
inline std::vector<double> lifetime_differences(const SimConfigGEV& cfg, std::size_t draws, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0xca11b});
  std::vector<double> diffs(draws);
  for (auto& d : diffs) {
    const double x2 = uniform_open(rng);
    const GevParams3 law{cfg.phi1 + cfg.phi2 * x2, cfg.sigma, cfg.xi};
    const double t = gev_draw(law, rng);
    const double t_prime = gev_draw(law, rng);
    d = t - t_prime;
  }
  std::sort(diffs.begin(), diffs.end());
  return diffs;
}

// Bisection for the shift c giving P(T > C) = target on a Monte Carlo sample of `draws`
// lifetime pairs. The bracket starts at [-1, 1] * sigma and doubles until it straddles the target.
inline CensoringCalibration calibrate_censoring(double target, const SimConfigGEV& cfg,
                                                std::size_t draws = 100000, std::uint64_t seed = 0x5eed) {
  if (!(target > 0.0 && target < 1.0)) throw InputError("calibration target must lie in (0, 1)");
  cfg.validate();
  const auto diffs = lifetime_differences(cfg, draws, seed);
  double lo = -cfg.sigma;
  double hi = cfg.sigma;
  int expansions = 0;
  while (exceedance_fraction(diffs, hi) > target) {
    hi *= 2.0;
    if (++expansions > 200) throw InfeasibleModelError("censoring calibration failed to bracket the target");
  }
  while (exceedance_fraction(diffs, lo) < target) {
    lo *= 2.0;
    if (++expansions > 400) throw InfeasibleModelError("censoring calibration failed to bracket the target");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (exceedance_fraction(diffs, mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {hi, exceedance_fraction(diffs, hi)};
}

// A shift of +infinity disables censoring.
inline CensoredDataset gen_gev_aft(const SimConfigGEV& cfg, double censor_shift) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n);
  Rng cov_rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(GevStream::covariate)});
  Rng life_rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(GevStream::lifetime)});
  Rng cens_rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(GevStream::censoring)});

  MatrixXd x(n, 2);
  VectorXd y(n);
  std::vector<int> delta(cfg.n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double x2 = uniform_open(cov_rng);
    x(j, 0) = 1.0;
    x(j, 1) = x2;
    const GevParams3 law{cfg.phi1 + cfg.phi2 * x2, cfg.sigma, cfg.xi};
    const double t = gev_draw(law, life_rng);
    const double c = censor_shift + gev_draw(law, cens_rng);
    const bool event = t <= c;
    y[j] = event ? t : c;
    delta[static_cast<std::size_t>(j)] = event ? 1 : 0;
  }
  if (std::none_of(delta.begin(), delta.end(), [](int v) { return v == 1; })) {
    throw InputError("simulated dataset has no uncensored observation; increase n or lower the censoring rate");
  }
  return {std::move(y), std::move(delta), std::move(x)};
}

inline CensoredDataset gen_gev_aft(const SimConfigGEV& cfg) {
  const double shift = cfg.target_censor_rate > 0.0 ? calibrate_censoring(cfg.target_censor_rate, cfg).shift
                                                    : std::numeric_limits<double>::infinity();
  return gen_gev_aft(cfg, shift);
}

}  // namespace mplkit
