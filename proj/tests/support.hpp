#pragma once

#include <Eigen/Dense>

#include <boost/math/differentiation/finite_difference.hpp>
#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mplkit/gev_aft.hpp"
#include "mplkit/random.hpp"

namespace mplkit::testing {

// Dataset with x = (1, u, ...) and responses placed inside the support of `truth`, censoring
// roughly a fraction `censor` of rows at random.
inline CensoredDataset random_dataset(std::uint64_t seed, Eigen::Index n, Eigen::Index p, const GevAftParams& truth,
                                      double censor = 0.3) {
  Rng rng = make_rng(seed, {77});
  MatrixXd x(n, p);
  VectorXd y(n);
  std::vector<int> delta(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    x(j, 0) = 1.0;
    for (Eigen::Index s = 1; s < p; ++s) x(j, s) = uniform_open(rng);
    const double loc = x.row(j).dot(truth.phi);
    y[j] = gev_draw(GevParams3{loc, truth.sigma, truth.xi}, rng);
    delta[static_cast<std::size_t>(j)] = uniform_open(rng) < censor ? 0 : 1;
  }
  delta[0] = 1;
  return {std::move(y), std::move(delta), std::move(x)};
}

inline GevAftParams example_truth(Eigen::Index p = 2, double xi = 2.0) {
  VectorXd phi = VectorXd::Ones(p);
  return {phi, 1.0, xi};
}

// Random parameters near `base` that keep every m_j comfortably positive.
inline GevAftParams random_feasible_params(std::uint64_t seed, const CensoredDataset& d, const GevAftParams& base) {
  Rng rng = make_rng(seed, {78});
  for (;;) {
    GevAftParams cand = base;
    for (Eigen::Index s = 0; s < cand.phi.size(); ++s) cand.phi[s] += 0.4 * (uniform_open(rng) - 0.5);
    cand.sigma *= 0.7 + 0.6 * uniform_open(rng);
    cand.xi *= 0.6 + 0.8 * uniform_open(rng);
    if (zm(cand, d).m.minCoeff() > 0.05) return cand;
  }
}

// Argmax of a smooth unimodal curve on [lo, hi] by a log-spaced grid scan, then a bracketed root
// of its finite-difference derivative. Uses nothing but curve values.
inline double numeric_argmax(const std::function<double(double)>& curve, double lo, double hi, int points = 400) {
  std::vector<double> grid(static_cast<std::size_t>(points));
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    if (curve(grid[i]) > curve(grid[best])) best = i;
  }
  if (best == 0 || best + 1 == grid.size()) return grid[best];
  auto slope = [&](double x) { return boost::math::differentiation::finite_difference_derivative(curve, x); };
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(slope, grid[best - 1], grid[best + 1],
                                                        boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (a + b);
}

}  // namespace mplkit::testing
