#pragma once

// Nested maximization for the GEV-AFT shape parameter: an inner quasi-Newton fit of the nuisance
// (phi, sigma) at fixed xi, and an outer 1-D search over xi of either the profile curve or the
// modified profile curve.

#include <Eigen/Dense>

#include <cmath>
#include <iterator>
#include <map>
#include <optional>
#include <vector>

#include "mplkit/errors.hpp"
#include "mplkit/gev_aft.hpp"
#include "mplkit/optimizer.hpp"

namespace mplkit {

struct InnerOptions {
  double grad_tol = 1e-8;  // on ||score||_inf relative to max(1, |loglik|, size of the summed score terms)
  int max_iterations = 200;
  int polish_steps = 8;
};

struct InnerFit {
  double xi = 0.0;
  VectorXd chi_hat;  // (phi_hat_xi, sigma_hat_xi)
  double loglik = kNegInf;
  bool converged = false;
  int iterations = 0;
  double grad_norm = std::numeric_limits<double>::infinity();
  bool used_simplex = false;

  [[nodiscard]] GevAftParams params() const { return GevAftParams::from_chi(chi_hat, xi); }
};

// Smallest sigma keeping every m_j >= 1/2 for the given phi and xi > 0.
inline double feasible_sigma_floor(const VectorXd& phi, double xi, const CensoredDataset& d) {
  const VectorXd resid = d.y() - d.x() * phi;
  if (xi > 0.0) return 2.0 * xi * std::max(0.0, -resid.minCoeff());
  return 2.0 * -xi * std::max(0.0, resid.maxCoeff());
}

// Least squares on the uncensored rows (all rows if there are too few events), residual scale
// for sigma, then sigma raised until the point is feasible.
inline GevAftParams default_start(const CensoredDataset& d, double xi) {
  const Eigen::Index p = d.num_covariates();
  std::vector<Eigen::Index> rows;
  for (Eigen::Index j = 0; j < d.size(); ++j)
    if (d.event(j)) rows.push_back(j);
  if (static_cast<Eigen::Index>(rows.size()) < p + 1) {
    rows.clear();
    for (Eigen::Index j = 0; j < d.size(); ++j) rows.push_back(j);
  }
  MatrixXd xs(static_cast<Eigen::Index>(rows.size()), p);
  VectorXd ys(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = d.x().row(rows[i]);
    ys[static_cast<Eigen::Index>(i)] = d.y()[rows[i]];
  }
  const VectorXd phi = xs.colPivHouseholderQr().solve(ys);
  const double dof = std::max<double>(1.0, static_cast<double>(rows.size()) - static_cast<double>(p));
  double sigma = std::sqrt((ys - xs * phi).squaredNorm() / dof);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) sigma = 1.0;
  sigma = std::max(sigma, 1.01 * feasible_sigma_floor(phi, xi, d));
  return {phi, sigma, xi};
}

// Move a fit obtained at another shape to `xi`. Scaling sigma by xi / from.xi keeps every m_j
// unchanged, so a feasible start stays feasible.
inline GevAftParams transfer_start(const GevAftParams& from, double xi) {
  return {from.phi, from.sigma * xi / from.xi, xi};
}

namespace detail {

// Observed information in (phi, log sigma) coordinates.
inline MatrixXd information_log_sigma(const GevAftParams& params, const CensoredDataset& d, const VectorXd& score) {
  const Eigen::Index k = params.phi.size();
  MatrixXd j = nuisance_information(params, d);
  j.row(k) *= params.sigma;
  j.col(k) *= params.sigma;
  j(k, k) -= params.sigma * score[k];
  return j;
}

inline bool inner_stationary(double grad_norm, double loglik, double tol) {
  return grad_norm <= tol * std::max(1.0, std::abs(loglik));
}

inline bool inner_stationary(const InnerFit& fit, const CensoredDataset& d, double tol) {
  if (!std::isfinite(fit.loglik)) return false;
  if (inner_stationary(fit.grad_norm, fit.loglik, tol)) return true;
  return fit.grad_norm <= tol * nuisance_score_scale(fit.params(), d);
}

// Newton steps in (phi, sigma) with the analytic information; each step must keep the point
// feasible, not lose likelihood beyond rounding, and shrink the score.
inline void newton_polish(InnerFit& fit, const CensoredDataset& d, const InnerOptions& opt) {
  for (int it = 0; it < opt.polish_steps; ++it) {
    // once stationary, keep taking full steps while they still shrink the score: the modified
    // curve depends on chi_hat to first order, so leftover solver error shows up in psi_hat
    const bool stationary = inner_stationary(fit, d, opt.grad_tol);
    if (fit.grad_norm == 0.0) return;
    const GevAftParams cur = fit.params();
    const VectorXd score = nuisance_score(cur, d);
    Eigen::LLT<MatrixXd> llt(nuisance_information(cur, d));
    if (llt.info() != Eigen::Success) return;
    const VectorXd step = llt.solve(score);
    bool improved = false;
    for (double t = 1.0; t > (stationary ? 0.75 : 1e-6); t *= 0.5) {
      const VectorXd cand = fit.chi_hat + t * step;
      if (!(cand[cand.size() - 1] > 0.0)) continue;
      const GevAftParams trial = GevAftParams::from_chi(cand, fit.xi);
      const double ll = profile_loglik(trial, d);
      if (!std::isfinite(ll) || ll < fit.loglik - 1e-12 * std::max(1.0, std::abs(fit.loglik))) continue;
      const double gn = nuisance_score(trial, d).lpNorm<Eigen::Infinity>();
      if (!(gn < fit.grad_norm)) continue;
      fit.chi_hat = cand;
      fit.loglik = ll;
      fit.grad_norm = gn;
      ++fit.iterations;
      improved = true;
      break;
    }
    if (!improved) return;
  }
}

inline InnerFit run_newton(double xi, const CensoredDataset& d, const GevAftParams& start, const InnerOptions& opt) {
  const Eigen::Index k = start.phi.size();
  auto objective = [&](const VectorXd& theta, VectorXd& grad, MatrixXd& info) {
    if (!std::isfinite(theta[k]) || std::abs(theta[k]) > 700.0) return kNegInf;
    const GevAftParams params(theta.head(k), std::exp(theta[k]), xi);
    const double ll = profile_loglik(params, d);
    if (!std::isfinite(ll)) return kNegInf;
    const VectorXd score = nuisance_score(params, d);
    info = information_log_sigma(params, d, score);
    grad = score;
    grad[k] *= params.sigma;
    return ll;
  };
  VectorXd theta0(k + 1);
  theta0 << start.phi, std::log(start.sigma);
  NewtonOptions no;
  no.grad_tol = opt.grad_tol;
  no.max_iterations = opt.max_iterations;
  const auto res = maximize_damped_newton(objective, theta0, no);

  InnerFit fit;
  fit.xi = xi;
  fit.iterations = res.iterations;
  fit.chi_hat.resize(k + 1);
  fit.chi_hat << res.x.head(k), std::exp(res.x[k]);
  fit.loglik = res.value;
  if (std::isfinite(fit.loglik)) fit.grad_norm = nuisance_score(fit.params(), d).lpNorm<Eigen::Infinity>();
  return fit;
}

}  // namespace detail

// Stationary point of profile_loglik in (phi, sigma) at fixed xi: damped Newton on
// (phi, log sigma) with the analytic information, infeasible trial points rejected by the line
// search. Falls back to Nelder-Mead when Newton stalls. Non-convergence is reported in the
// result, never thrown.
inline InnerFit maximize_inner(double xi, const CensoredDataset& d, const GevAftParams& start,
                               const InnerOptions& opt = {}) {
  GevAftParams begin = start.xi == xi ? start : transfer_start(start, xi);
  if (!feasible(begin, d)) {
    begin.sigma = std::max(begin.sigma, 1.01 * feasible_sigma_floor(begin.phi, xi, d));
    if (!feasible(begin, d)) begin = default_start(d, xi);
  }

  InnerFit fit = detail::run_newton(xi, d, begin, opt);
  if (std::isfinite(fit.loglik)) detail::newton_polish(fit, d, opt);
  fit.converged = detail::inner_stationary(fit, d, opt.grad_tol);
  if (fit.converged) return fit;

  // simplex fallback on (phi, log sigma), then another Newton pass from its optimum
  const GevAftParams from = std::isfinite(fit.loglik) ? fit.params() : begin;
  const Eigen::Index k = from.phi.size();
  VectorXd theta0(k + 1);
  theta0 << from.phi, std::log(from.sigma);
  const auto simplex = maximize_simplex(
      [&](const VectorXd& theta) {
        if (std::abs(theta[k]) > 700.0) return kNegInf;
        return profile_loglik(GevAftParams(theta.head(k), std::exp(theta[k]), xi), d);
      },
      theta0);
  if (std::isfinite(simplex.value)) {
    InnerFit retry = detail::run_newton(
        xi, d, GevAftParams(simplex.x.head(k), std::exp(simplex.x[k]), xi), opt);
    if (std::isfinite(retry.loglik)) detail::newton_polish(retry, d, opt);
    retry.iterations += fit.iterations + simplex.iterations;
    retry.used_simplex = true;
    retry.converged = detail::inner_stationary(retry, d, opt.grad_tol);
    if (retry.converged || retry.loglik > fit.loglik) return retry;
  }
  return fit;
}

// ---------------------------------------------------------------------------------------------
// Outer fits over xi

enum class CurveKind { profile, modified_profile };

inline const char* to_string(CurveKind k) { return k == CurveKind::profile ? "p" : "mp"; }

struct GevFitOptions {
  double bracket_lo = 0.05;
  double bracket_hi = 10.0;
  int grid_points = 41;
  InnerOptions inner;
  bool warm_start = true;
  // Clip the upper end of the bracket below unbounded_shape_threshold(d).
  bool cap_at_unbounded = true;
};

// For xi > (n - p) / p the likelihood has no maximum in (phi, sigma): a regression surface
// through p uncensored points lying below all other responses, with sigma -> 0, sends it to
// +infinity (each of the p interpolated points contributes -log sigma, every other observation
// only (1/xi) log sigma).
inline double unbounded_shape_threshold(const CensoredDataset& d) {
  const auto p = static_cast<double>(d.num_covariates());
  return (static_cast<double>(d.size()) - p) / p;
}

struct ProfileDiagnostics {
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  bool at_boundary = false;
  bool beside_failure = false;  // a grid neighbour of psi_hat was excluded from the curve
  int refinements = 0;
  int failures = 0;  // curve evaluations with a non-converged inner fit or undefined modification
  std::optional<MpTerms> modification_at_hat;
};

struct ProfileFit {
  CurveKind kind = CurveKind::profile;
  double psi_hat = std::numeric_limits<double>::quiet_NaN();
  double value = kNegInf;
  std::vector<CurvePoint> curve;    // grid evaluations
  std::vector<InnerFit> inner_fits;  // inner fit at each grid point
  InnerFit inner_at_hat;
  ProfileDiagnostics diagnostics;

  [[nodiscard]] bool converged() const noexcept { return inner_at_hat.converged; }
};

class GevProfiler {
 public:
  GevProfiler(const CensoredDataset& d, GevFitOptions opt) : data_(d), opt_(opt) {
    if (opt_.cap_at_unbounded) {
      opt_.bracket_hi = std::min(opt_.bracket_hi, unbounded_shape_threshold(d) * (1.0 - 1e-3));
    }
    if (!(opt_.bracket_lo > 0.0 && opt_.bracket_lo < opt_.bracket_hi)) {
      throw InfeasibleModelError("empty shape bracket after clipping to the bounded-likelihood region");
    }
  }

  // Inner fit at xi, memoized; warm-started from the nearest cached shape when enabled.
  const InnerFit& inner(double xi) {
    if (auto it = cache_.find(xi); it != cache_.end()) return it->second;
    GevAftParams start = default_start(data_, xi);
    if (opt_.warm_start) {
      if (const InnerFit* near = nearest_converged(xi)) start = transfer_start(near->params(), xi);
    }
    return cache_.emplace(xi, maximize_inner(xi, data_, start, opt_.inner)).first->second;
  }

  ProfileFit fit_profile() {
    int failures = 0;
    auto curve = [&](double xi) {
      const InnerFit& f = inner(xi);
      if (!f.converged) {
        ++failures;
        return kNegInf;
      }
      return f.loglik;
    };
    ProfileFit fit = run(CurveKind::profile, curve);
    fit.diagnostics.failures = failures;
    return fit;
  }

  // Modified profile curve with V_hat fixed at the full MLE.
  ProfileFit fit_modified(const GevAftParams& full_mle) {
    const MatrixXd v_hat = vhat(data_, full_mle);
    int failures = 0;
    auto curve = [&](double xi) {
      const InnerFit& f = inner(xi);
      if (!f.converged || !std::isfinite(f.loglik)) {
        ++failures;
        return kNegInf;
      }
      try {
        return mp_terms(f.params(), data_, v_hat).value;
      } catch (const ModificationUndefinedError&) {
        ++failures;
        return kNegInf;
      } catch (const InfeasibleModelError&) {
        ++failures;
        return kNegInf;
      }
    };
    ProfileFit fit = run(CurveKind::modified_profile, curve);
    fit.diagnostics.failures = failures;
    try {
      fit.diagnostics.modification_at_hat = mp_terms(fit.inner_at_hat.params(), data_, v_hat);
    } catch (const std::runtime_error&) {
      ++fit.diagnostics.failures;
    }
    return fit;
  }

  [[nodiscard]] const GevFitOptions& options() const noexcept { return opt_; }

 private:
  const InnerFit* nearest_converged(double xi) const {
    const InnerFit* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    auto consider = [&](const InnerFit& f) {
      if (!f.converged || f.xi * xi <= 0.0) return;
      const double dist = std::abs(std::log(f.xi / xi));
      if (dist < best_dist) {
        best_dist = dist;
        best = &f;
      }
    };
    auto hi = cache_.lower_bound(xi);
    if (hi != cache_.end()) consider(hi->second);
    if (hi != cache_.begin()) consider(std::prev(hi)->second);
    return best;
  }

  template <class Curve>
  ProfileFit run(CurveKind kind, Curve&& curve) {
    OuterOptions oo;
    oo.grid_points = opt_.grid_points;
    const OuterResult outer = maximize_outer(curve, opt_.bracket_lo, opt_.bracket_hi, oo);
    ProfileFit fit;
    fit.kind = kind;
    fit.psi_hat = outer.psi_hat;
    fit.value = outer.value;
    fit.curve = outer.grid;
    for (const auto& pt : outer.grid) fit.inner_fits.push_back(inner(pt.psi));
    fit.inner_at_hat = inner(outer.psi_hat);
    fit.diagnostics.bracket_lo = opt_.bracket_lo;
    fit.diagnostics.bracket_hi = opt_.bracket_hi;
    fit.diagnostics.at_boundary = outer.at_boundary;
    for (std::size_t i = 0; i + 1 < outer.grid.size(); ++i) {
      const double a = outer.grid[i].psi;
      const double b = outer.grid[i + 1].psi;
      if (outer.psi_hat < a || outer.psi_hat > b) continue;
      const std::size_t lo = i == 0 ? 0 : i - 1;
      const std::size_t hi = std::min(i + 2, outer.grid.size() - 1);
      for (std::size_t j = lo; j <= hi; ++j) {
        if (!std::isfinite(outer.grid[j].value)) fit.diagnostics.beside_failure = true;
      }
    }
    fit.diagnostics.refinements = outer.refinements;
    return fit;
  }

  const CensoredDataset& data_;
  GevFitOptions opt_;
  std::map<double, InnerFit> cache_;
};

struct GevFitResult {
  ProfileFit profile;
  std::optional<ProfileFit> modified;

  // (chi_hat, xi_hat) at the profile maximizer.
  [[nodiscard]] GevAftParams full_mle() const { return profile.inner_at_hat.params(); }
};

inline GevFitResult fit_gev(const CensoredDataset& d, const GevFitOptions& opt = {}, bool with_modified = true) {
  GevProfiler profiler(d, opt);
  GevFitResult res{profiler.fit_profile(), std::nullopt};
  if (with_modified) res.modified = profiler.fit_modified(res.full_mle());
  return res;
}

}  // namespace mplkit
