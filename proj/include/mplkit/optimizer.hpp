#pragma once

// Generic maximizers and finite-difference checks.
//
//   maximize_quasi_newton  BFGS with backtracking; points where the objective is not finite are
//                          rejected by the line search, so feasibility regions can be encoded as
//                          -infinity.
//   maximize_damped_newton Newton with Levenberg damping and the same line search, for objectives
//                          with an analytic Hessian.
//   maximize_simplex       Nelder-Mead, derivative free.
//   maximize_outer         1-D: grid scan over a bracket followed by Brent refinement.
//   fd_gradient / fd_hessian / fd_check
//                          central differences.

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "mplkit/errors.hpp"

namespace mplkit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------------------------
// Quasi-Newton

struct QuasiNewtonOptions {
  double grad_tol = 1e-8;  // stop when ||grad||_inf <= grad_tol * max(1, |value|)
  int max_iterations = 500;
  int max_backtracks = 60;
  double armijo = 1e-4;
};

struct QuasiNewtonResult {
  VectorXd x;
  double value = -std::numeric_limits<double>::infinity();
  VectorXd grad;
  bool converged = false;
  int iterations = 0;
  double grad_norm = std::numeric_limits<double>::infinity();
};

// `objective(x, grad)` returns f(x) and fills grad when f(x) is finite. `inverse_curvature`
// seeds the BFGS approximation of (-Hessian)^{-1}; it must be symmetric positive definite.
template <class Objective>
QuasiNewtonResult maximize_quasi_newton(Objective&& objective, VectorXd x0, const QuasiNewtonOptions& opt = {},
                                        std::optional<MatrixXd> inverse_curvature = std::nullopt) {
  const Eigen::Index dim = x0.size();
  QuasiNewtonResult res;
  res.x = std::move(x0);
  res.grad = VectorXd::Zero(dim);
  res.value = objective(res.x, res.grad);
  if (!std::isfinite(res.value)) return res;

  MatrixXd inv_h = inverse_curvature ? *inverse_curvature : MatrixXd::Identity(dim, dim);
  const auto stationary = [&](const QuasiNewtonResult& r) {
    return r.grad.lpNorm<Eigen::Infinity>() <= opt.grad_tol * std::max(1.0, std::abs(r.value));
  };

  VectorXd trial_grad(dim);
  bool reset_once = false;
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (stationary(res)) {
      res.converged = true;
      break;
    }
    VectorXd dir = inv_h * res.grad;
    double slope = res.grad.dot(dir);
    if (!(slope > 0.0)) {
      inv_h.setIdentity();
      dir = res.grad;
      slope = res.grad.squaredNorm();
    }

    double step = 1.0;
    bool accepted = false;
    VectorXd trial;
    double trial_value = 0.0;
    for (int k = 0; k < opt.max_backtracks; ++k, step *= 0.5) {
      trial = res.x + step * dir;
      trial_value = objective(trial, trial_grad);
      if (std::isfinite(trial_value) && trial_value >= res.value + opt.armijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // one restart from steepest ascent before giving up
      if (reset_once) break;
      reset_once = true;
      inv_h.setIdentity();
      continue;
    }
    reset_once = false;

    const VectorXd s = trial - res.x;
    const VectorXd yv = res.grad - trial_grad;  // change in the gradient of -f
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const VectorXd hy = inv_h * yv;
      inv_h += (rho * rho * yv.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
    res.x = std::move(trial);
    res.value = trial_value;
    res.grad = trial_grad;
  }
  if (!res.converged) res.converged = stationary(res);
  res.grad_norm = res.grad.lpNorm<Eigen::Infinity>();
  return res;
}

// ---------------------------------------------------------------------------------------------
// Damped Newton

struct NewtonOptions {
  double grad_tol = 1e-8;  // stop when ||grad||_inf <= grad_tol * max(1, |value|)
  int max_iterations = 200;
  int max_backtracks = 60;
  double armijo = 1e-4;
};

using NewtonResult = QuasiNewtonResult;

// `objective(x, grad, info)` returns f(x) and, when finite, fills grad and info = -Hessian.
// Each step solves (info + tau I) d = grad with the smallest tau in {0, tau0 * 10^k} that makes
// the system positive definite, then backtracks until the Armijo condition holds at a finite
// point.
template <class Objective>
NewtonResult maximize_damped_newton(Objective&& objective, VectorXd x0, const NewtonOptions& opt = {}) {
  const Eigen::Index dim = x0.size();
  NewtonResult res;
  res.x = std::move(x0);
  res.grad = VectorXd::Zero(dim);
  MatrixXd info = MatrixXd::Identity(dim, dim);
  res.value = objective(res.x, res.grad, info);
  if (!std::isfinite(res.value)) return res;

  const auto stationary = [&](const NewtonResult& r) {
    return r.grad.lpNorm<Eigen::Infinity>() <= opt.grad_tol * std::max(1.0, std::abs(r.value));
  };
  VectorXd trial_grad(dim);
  MatrixXd trial_info(dim, dim);
  double extra_damping = 0.0;
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (stationary(res)) {
      res.converged = true;
      break;
    }
    const double scale = std::max(1e-12, info.diagonal().cwiseAbs().maxCoeff());
    double tau = extra_damping;
    VectorXd dir;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::LLT<MatrixXd> llt(info + tau * MatrixXd::Identity(dim, dim));
      if (llt.info() == Eigen::Success) {
        dir = llt.solve(res.grad);
        if (dir.allFinite()) break;
      }
      dir.resize(0);
      tau = tau == 0.0 ? 1e-8 * scale : 10.0 * tau;
    }
    if (dir.size() == 0) break;
    const double slope = res.grad.dot(dir);

    double step = 1.0;
    bool accepted = false;
    VectorXd trial;
    double trial_value = 0.0;
    for (int k = 0; k < opt.max_backtracks; ++k, step *= 0.5) {
      trial = res.x + step * dir;
      trial_value = objective(trial, trial_grad, trial_info);
      if (std::isfinite(trial_value) && trial_value >= res.value + opt.armijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // near a maximum rounding can defeat Armijo; more damping shortens and rotates the step
      if (extra_damping > 1e8 * scale) break;
      extra_damping = extra_damping == 0.0 ? 1e-4 * scale : 100.0 * extra_damping;
      continue;
    }
    extra_damping = 0.0;
    res.x = std::move(trial);
    res.value = trial_value;
    res.grad = trial_grad;
    info = trial_info;
  }
  if (!res.converged) res.converged = stationary(res);
  res.grad_norm = res.grad.lpNorm<Eigen::Infinity>();
  return res;
}

// ---------------------------------------------------------------------------------------------
// Nelder-Mead

struct SimplexResult {
  VectorXd x;
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
};

template <class Objective>
SimplexResult maximize_simplex(Objective&& f, const VectorXd& x0, double initial_step = 0.1,
                               int max_iterations = 2000, double ftol = 1e-12) {
  const Eigen::Index dim = x0.size();
  std::vector<VectorXd> pts(static_cast<std::size_t>(dim + 1), x0);
  std::vector<double> vals(pts.size());
  for (Eigen::Index i = 0; i < dim; ++i) {
    auto& p = pts[static_cast<std::size_t>(i + 1)];
    p[i] += initial_step * std::max(1.0, std::abs(p[i]));
  }
  // minimize -f; non-finite values become +inf
  auto eval = [&](const VectorXd& x) {
    const double v = f(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = eval(pts[i]);

  std::vector<std::size_t> order(pts.size());
  SimplexResult res;
  for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const auto best = order.front();
    const auto worst = order.back();
    const auto second = order[order.size() - 2];
    if (std::isfinite(vals[worst]) &&
        std::abs(vals[worst] - vals[best]) <= ftol * (std::abs(vals[best]) + std::abs(vals[worst]) + 1e-300)) {
      break;
    }
    VectorXd centroid = VectorXd::Zero(dim);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(dim);

    const VectorXd reflected = centroid + (centroid - pts[worst]);
    const double fr = eval(reflected);
    if (fr < vals[best]) {
      const VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const VectorXd contracted = centroid + 0.5 * (pts[worst] - centroid);
    const double fc = eval(contracted);
    if (fc < vals[worst]) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.x = pts[best];
  res.value = -vals[best];
  return res;
}

// ---------------------------------------------------------------------------------------------
// One-dimensional outer maximization

struct OuterOptions {
  int grid_points = 41;
  bool log_spaced = true;  // only honored when the bracket is strictly positive
  double psi_tol = 1e-6;
};

struct CurvePoint {
  double psi;
  double value;
};

struct OuterResult {
  double psi_hat = std::numeric_limits<double>::quiet_NaN();
  double value = -std::numeric_limits<double>::infinity();
  bool at_boundary = false;
  std::vector<CurvePoint> grid;
  int refinements = 0;  // curve evaluations spent in the local refinement
};

inline std::vector<double> make_grid(double lo, double hi, int points, bool log_spaced) {
  std::vector<double> g(static_cast<std::size_t>(points));
  const bool use_log = log_spaced && lo > 0.0;
  for (int i = 0; i < points; ++i) {
    const double frac = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
    g[static_cast<std::size_t>(i)] = use_log ? lo * std::pow(hi / lo, frac) : lo + frac * (hi - lo);
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

// Grid scan, then Brent (golden section with parabolic steps) on the cells adjacent to the best
// grid point. Throws InfeasibleModelError when the curve is -infinity on the whole grid.
inline OuterResult maximize_outer(const std::function<double(double)>& curve, double lo, double hi,
                                  const OuterOptions& opt = {}) {
  if (!(lo < hi)) throw DomainError("outer bracket must satisfy lo < hi");
  if (opt.grid_points < 3) throw DomainError("outer grid needs at least 3 points");
  OuterResult res;
  const auto grid = make_grid(lo, hi, opt.grid_points, opt.log_spaced);
  std::size_t best = grid.size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = curve(grid[i]);
    res.grid.push_back({grid[i], v});
    if (std::isfinite(v) && (best == grid.size() || v > res.grid[best].value)) best = i;
  }
  if (best == grid.size()) throw InfeasibleModelError("no feasible interest value in the bracket");

  const double a = grid[best == 0 ? 0 : best - 1];
  const double b = grid[std::min(best + 1, grid.size() - 1)];
  constexpr double kFloor = -1e300;  // Brent's parabola fit needs finite values
  auto negated = [&](double psi) {
    ++res.refinements;
    const double v = curve(psi);
    return std::isfinite(v) ? -v : -kFloor;
  };
  // relative tolerance 2^-25 (about 3e-8) is the practical floor for smooth maxima
  constexpr int kBits = std::numeric_limits<double>::digits / 2;
  std::uintmax_t max_iter = 200;
  const auto [x, neg] = boost::math::tools::brent_find_minima(negated, a, b, kBits, max_iter);

  if (-neg >= res.grid[best].value) {
    res.psi_hat = x;
    res.value = -neg;
  } else {
    res.psi_hat = grid[best];
    res.value = res.grid[best].value;
  }
  const double edge_tol = std::max(opt.psi_tol, 1e-7 * std::abs(res.psi_hat));
  res.at_boundary = std::abs(res.psi_hat - lo) <= edge_tol || std::abs(res.psi_hat - hi) <= edge_tol;
  return res;
}

// ---------------------------------------------------------------------------------------------
// Finite differences

// Central differences with step h_i = rel_step * max(1, |x_i|).
template <class F>
VectorXd fd_gradient(F&& f, const VectorXd& x, double rel_step = 1e-6) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Hessian by central differences of an analytic gradient, symmetrized.
template <class G>
MatrixXd fd_jacobian_of_gradient(G&& grad, const VectorXd& x, double rel_step = 1e-6) {
  MatrixXd hess(x.size(), x.size());
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const VectorXd gp = grad(xp);
    xp[i] = x[i] - h;
    const VectorXd gm = grad(xp);
    xp[i] = x[i];
    hess.col(i) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

namespace detail {

template <class F>
MatrixXd central_hessian(F& f, const VectorXd& x, const VectorXd& steps) {
  const Eigen::Index n = x.size();
  MatrixXd hess(n, n);
  const double f0 = f(x);
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = steps[i];
    xp[i] = x[i] + hi;
    const double fp = f(xp);
    xp[i] = x[i] - hi;
    const double fm = f(xp);
    xp[i] = x[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = steps[j];
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          xp[i] = x[i] + si * hi;
          xp[j] = x[j] + sj * hj;
          acc += si * sj * f(xp);
        }
      }
      xp[i] = x[i];
      xp[j] = x[j];
      hess(i, j) = hess(j, i) = acc / (4.0 * hi * hj);
    }
  }
  return hess;
}

}  // namespace detail

// Hessian from function values only: central differences at steps h and h/2, combined by one
// Richardson step so the leading h^2 error cancels.
template <class F>
MatrixXd fd_hessian(F&& f, const VectorXd& x, double rel_step = 1e-3) {
  VectorXd steps(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) steps[i] = rel_step * std::max(1.0, std::abs(x[i]));
  const MatrixXd coarse = detail::central_hessian(f, x, steps);
  const MatrixXd fine = detail::central_hessian(f, x, 0.5 * steps);
  return (4.0 * fine - coarse) / 3.0;
}

// Worst relative discrepancy |fd_i - g_i| / max(|fd_i|, floor) between an analytic
// gradient and central differences of f at x. If f is not finite on the stencil the step is
// halved; after 5 halvings the check throws.
template <class F>
double fd_check(F&& f, const VectorXd& x, const VectorXd& analytic_grad, double rel_step = 1e-6,
                double floor = 1e-8) {
  if (analytic_grad.size() != x.size()) throw DomainError("gradient length mismatch");
  double worst = 0.0;
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double h = rel_step * std::max(1.0, std::abs(x[i]));
    double fp = 0.0;
    double fm = 0.0;
    int shrinks = 0;
    for (;;) {
      xp[i] = x[i] + h;
      fp = f(xp);
      xp[i] = x[i] - h;
      fm = f(xp);
      xp[i] = x[i];
      if (std::isfinite(fp) && std::isfinite(fm)) break;
      if (++shrinks > 5) throw DomainError("fd_check: function not finite around the point");
      h *= 0.5;
    }
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max(std::abs(fd), floor);
    worst = std::max(worst, std::abs(fd - analytic_grad[i]) / denom);
  }
  return worst;
}

inline double fd_check(const std::function<double(double)>& f, double x, double analytic) {
  VectorXd xv(1), gv(1);
  xv << x;
  gv << analytic;
  return fd_check([&](const VectorXd& v) { return f(v[0]); }, xv, gv);
}

}  // namespace mplkit
