#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mplkit/ig_inference.hpp"
#include "mplkit/optimizer.hpp"
#include "mplkit/profile_fit.hpp"
#include "mplkit/simulation.hpp"

using namespace mplkit;

namespace {

// f(x) = -(x - c)' A (x - c) / 2 + 5 with A symmetric positive definite.
struct Quadratic {
  MatrixXd a;
  VectorXd c;

  Quadratic() : a(3, 3), c(3) {
    a << 4, 1, 0.5, 1, 3, 0.2, 0.5, 0.2, 2;
    c << 1.5, -2.0, 0.25;
  }
  double value(const VectorXd& x) const { return -0.5 * (x - c).dot(a * (x - c)) + 5.0; }
  VectorXd grad(const VectorXd& x) const { return -a * (x - c); }
};

CensoredDataset example_dataset(std::size_t n, std::uint64_t seed) {
  SimConfigGEV cfg;
  cfg.n = n;
  cfg.seed = seed;
  return gen_gev_aft(cfg, 3.1354);
}

}  // namespace

TEST(QuasiNewton, RecoversQuadraticOptimum) {
  const Quadratic q;
  const auto res = maximize_quasi_newton(
      [&](const VectorXd& x, VectorXd& g) {
        g = q.grad(x);
        return q.value(x);
      },
      VectorXd::Zero(3));
  ASSERT_TRUE(res.converged);
  EXPECT_LE((res.x - q.c).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(res.value, 5.0, 1e-12);
}

TEST(QuasiNewton, RejectsInfeasibleTrialPoints) {
  // log barrier: maximum at x = 1 on x > 0, -infinity elsewhere
  const auto res = maximize_quasi_newton(
      [](const VectorXd& x, VectorXd& g) {
        if (!(x[0] > 0.0)) return kNegInf;
        g.resize(1);
        g[0] = 1.0 / x[0] - 1.0;
        return std::log(x[0]) - x[0];
      },
      VectorXd::Constant(1, 20.0));
  ASSERT_TRUE(res.converged);
  EXPECT_NEAR(res.x[0], 1.0, 1e-8);
}

TEST(DampedNewton, RecoversQuadraticOptimum) {
  const Quadratic q;
  const auto res = maximize_damped_newton(
      [&](const VectorXd& x, VectorXd& g, MatrixXd& info) {
        g = q.grad(x);
        info = q.a;
        return q.value(x);
      },
      VectorXd::Constant(3, 10.0));
  ASSERT_TRUE(res.converged);
  EXPECT_LE((res.x - q.c).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(res.iterations, 2);
}

TEST(DampedNewton, HandlesIndefiniteCurvature) {
  // f = -x^4 + x^2: information is negative near 0, maxima at +-1/sqrt(2)
  const auto res = maximize_damped_newton(
      [](const VectorXd& x, VectorXd& g, MatrixXd& info) {
        const double v = x[0];
        g.resize(1);
        g[0] = -4 * v * v * v + 2 * v;
        info.resize(1, 1);
        info(0, 0) = 12 * v * v - 2;
        return -v * v * v * v + v * v;
      },
      VectorXd::Constant(1, 0.05));
  ASSERT_TRUE(res.converged);
  EXPECT_NEAR(std::abs(res.x[0]), 1.0 / std::sqrt(2.0), 1e-8);
}

TEST(Simplex, RecoversQuadraticOptimum) {
  const Quadratic q;
  const auto res = maximize_simplex([&](const VectorXd& x) { return q.value(x); }, VectorXd::Zero(3));
  EXPECT_LE((res.x - q.c).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_NEAR(res.value, 5.0, 1e-10);
}

TEST(Outer, ParabolaPeak) {
  OuterOptions opt;
  opt.log_spaced = false;
  const auto res = maximize_outer([](double x) { return -(x - 3.0) * (x - 3.0); }, 0.0, 10.0, opt);
  EXPECT_NEAR(res.psi_hat, 3.0, 1e-6);
  EXPECT_FALSE(res.at_boundary);
  for (const auto& pt : res.grid) EXPECT_GE(res.value, pt.value);
}

TEST(Outer, IgModifiedCurve) {
  const IgSample s({1.0, 2.0, 3.0});
  const auto mp = maximize_outer([&](double l) { return modified_profile_loglik_lambda(s, l); }, 0.1, 100.0);
  EXPECT_NEAR(mp.psi_hat, 6.0, 1e-5);
  const auto p = maximize_outer([&](double l) { return profile_loglik_lambda(s, l); }, 0.1, 100.0);
  EXPECT_NEAR(p.psi_hat, 9.0, 1e-5);
}

TEST(Outer, IgCurvesMatchClosedFormsOnRandomSamples) {
  Rng rng = make_rng(404);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 3 + static_cast<std::size_t>(uniform_open(rng) * 40);
    const IgSample s(ig_sample(n, {2.0, 4.0}, rng));
    const IgFit fit = fit_ig(s);
    const double lo = 1e-3;
    const double hi = 1e4;
    const auto p = maximize_outer([&](double l) { return profile_loglik_lambda(s, l); }, lo, hi);
    const auto mp = maximize_outer([&](double l) { return modified_profile_loglik_lambda(s, l); }, lo, hi);
    EXPECT_NEAR(p.psi_hat / fit.lambda_hat_p, 1.0, 1e-5);
    EXPECT_NEAR(mp.psi_hat / fit.lambda_hat_mp, 1.0, 1e-5);
  }
}

TEST(Outer, MonotoneCurveEndsAtTheBoundary) {
  const auto up = maximize_outer([](double x) { return x; }, 1.0, 4.0);
  EXPECT_NEAR(up.psi_hat, 4.0, 1e-6);
  EXPECT_TRUE(up.at_boundary);
  const auto down = maximize_outer([](double x) { return -x; }, 1.0, 4.0);
  EXPECT_NEAR(down.psi_hat, 1.0, 1e-6);
  EXPECT_TRUE(down.at_boundary);
}

TEST(Outer, NoFeasiblePoint) {
  EXPECT_THROW(maximize_outer([](double) { return kNegInf; }, 1.0, 2.0), InfeasibleModelError);
  EXPECT_THROW(maximize_outer([](double x) { return x; }, 2.0, 1.0), DomainError);
}

TEST(Outer, SkipsInfeasibleRegions) {
  const auto res = maximize_outer([](double x) { return x > 5.0 ? kNegInf : -(x - 2.0) * (x - 2.0); }, 0.5, 10.0);
  EXPECT_NEAR(res.psi_hat, 2.0, 1e-6);
}

TEST(FdCheck, ExactAndWrongGradients) {
  EXPECT_LE(fd_check([](double x) { return x * x; }, 3.0, 6.0), 1e-10);
  EXPECT_NEAR(fd_check([](double x) { return x * x; }, 3.0, 6.1), 0.1 / 6.0, 1e-8);
  VectorXd x(2);
  x << 1.0, -2.0;
  VectorXd g(2);
  g << 2.0 * x[0] * x[1], x[0] * x[0];
  EXPECT_LE(fd_check([](const VectorXd& v) { return v[0] * v[0] * v[1]; }, x, g), 1e-9);
}

TEST(FdCheck, ShrinksThenGivesUpNearASingularity) {
  // finite after one halving of the step
  const double h = 1e-6;
  auto f = [&](double x) { return x > 1.0 - 0.75 * h ? x : kNegInf; };
  EXPECT_LE(fd_check(f, 1.0, 1.0), 1e-8);
  EXPECT_THROW(fd_check([](double x) { return x == 1.0 ? 0.0 : kNegInf; }, 1.0, 0.0), DomainError);
}

TEST(Inner, StationaryOnExampleData) {
  const auto d = example_dataset(50, 1);
  const InnerFit fit = maximize_inner(2.0, d, default_start(d, 2.0));
  ASSERT_TRUE(fit.converged);
  EXPECT_LE(fit.grad_norm, 1e-8 * std::max(1.0, std::abs(fit.loglik)));
  EXPECT_GT(fit.chi_hat[2], 0.0);
  EXPECT_TRUE(feasible(fit.params(), d));
  EXPECT_NEAR(fit.grad_norm, nuisance_score(fit.params(), d).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(Inner, SameOptimumFromTruthAndPerturbedStart) {
  const auto d = example_dataset(50, 2);
  VectorXd phi(2);
  phi << 1.0, 1.0;
  const GevAftParams truth{phi, 1.0, 2.0};
  const InnerFit a = maximize_inner(2.0, d, truth);
  const InnerFit b = maximize_inner(2.0, d, {(phi.array() + 0.5).matrix(), 1.5, 2.0});
  ASSERT_TRUE(a.converged);
  ASSERT_TRUE(b.converged);
  EXPECT_LE((a.chi_hat - b.chi_hat).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Inner, InvariantToObservationOrder) {
  const auto d = example_dataset(40, 3);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(d.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 7, perm.end());
  VectorXd y(d.size());
  MatrixXd x(d.size(), d.num_covariates());
  std::vector<int> delta(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    y[static_cast<Eigen::Index>(i)] = d.y()[perm[i]];
    x.row(static_cast<Eigen::Index>(i)) = d.x().row(perm[i]);
    delta[i] = d.delta()[static_cast<std::size_t>(perm[i])];
  }
  const CensoredDataset shuffled(y, delta, x);
  const InnerFit a = maximize_inner(1.7, d, default_start(d, 1.7));
  const InnerFit b = maximize_inner(1.7, shuffled, default_start(shuffled, 1.7));
  ASSERT_TRUE(a.converged && b.converged);
  EXPECT_LE((a.chi_hat - b.chi_hat).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_NEAR(a.loglik, b.loglik, 1e-9);
}

TEST(Inner, InfeasibleStartIsRepaired) {
  const auto d = example_dataset(30, 4);
  VectorXd phi(2);
  phi << 10.0, 0.0;  // far above most responses
  const InnerFit fit = maximize_inner(2.0, d, {phi, 0.1, 2.0});
  EXPECT_TRUE(fit.converged);
  EXPECT_TRUE(feasible(fit.params(), d));
}

TEST(Profiler, WarmAndColdSweepsAgree) {
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = example_dataset(50, 100 + seed);
    GevFitOptions warm;
    GevFitOptions cold;
    cold.warm_start = false;
    const auto a = fit_gev(d, warm);
    const auto b = fit_gev(d, cold);
    EXPECT_NEAR(a.profile.psi_hat, b.profile.psi_hat, 1e-5) << "seed " << seed;
    EXPECT_NEAR(a.modified->psi_hat, b.modified->psi_hat, 1e-5) << "seed " << seed;
    ++compared;
  }
  EXPECT_EQ(compared, 20);
}

TEST(Profiler, BracketIsClippedBelowTheUnboundedRegion) {
  const auto d = example_dataset(20, 5);
  EXPECT_DOUBLE_EQ(unbounded_shape_threshold(d), 9.0);
  GevProfiler prof(d, {});
  EXPECT_LT(prof.options().bracket_hi, 9.0);
  GevFitOptions tight;
  tight.bracket_lo = 0.5;
  tight.bracket_hi = 5.0;
  const auto res = fit_gev(d, tight);
  EXPECT_EQ(res.profile.diagnostics.bracket_lo, 0.5);
  EXPECT_EQ(res.profile.diagnostics.bracket_hi, 5.0);
  EXPECT_GE(res.profile.psi_hat, 0.5);
  EXPECT_LE(res.profile.psi_hat, 5.0);
}

TEST(Profiler, CurveInvariants) {
  const auto d = example_dataset(50, 6);
  const auto res = fit_gev(d);
  for (const ProfileFit* f : {&res.profile, &*res.modified}) {
    EXPECT_GE(f->psi_hat, f->diagnostics.bracket_lo);
    EXPECT_LE(f->psi_hat, f->diagnostics.bracket_hi);
    for (const auto& pt : f->curve) EXPECT_GE(f->value, pt.value);
    EXPECT_EQ(f->curve.size(), f->inner_fits.size());
  }
  ASSERT_TRUE(res.modified->diagnostics.modification_at_hat.has_value());
  EXPECT_NEAR(res.profile.value, res.profile.inner_at_hat.loglik, 0.0);
}
