#pragma once

// Right-censored GEV accelerated-failure-time likelihood with the shape xi as interest parameter
// and chi = (phi_1..phi_p, sigma) as nuisance.
//
//   z_j = (y_j - x_j phi) / sigma,   m_j = 1 + xi z_j,   t_j = m_j^{-1/xi}
//   l   = sum_{censored} log(1 - exp(-t_j)) - r log sigma
//         - (1/xi + 1) sum_{events} log m_j - sum_{events} t_j
//
// Every observation enters through m_j only (plus the -r log sigma term), so derivatives are
// assembled from two per-observation kernels g_j = dl_j/dm_j and h_j = d2l_j/dm_j^2 and the
// chain-rule derivatives of m_j:
//   dm/dphi_s = -xi x_js / sigma      dm/dsigma = -xi z_j / sigma      dm/dy_j = xi / sigma
//   d2m/dphi_s dsigma = xi x_js / sigma^2                  d2m/dsigma^2 = 2 xi z_j / sigma^2

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "mplkit/distributions.hpp"
#include "mplkit/errors.hpp"

namespace mplkit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class CensoredDataset {
 public:
  // Validates: n >= p + 2, delta in {0,1}, at least one event, first column of X all ones and
  // X of full column rank.
  CensoredDataset(VectorXd y, std::vector<int> delta, MatrixXd x)
      : y_(std::move(y)), delta_(std::move(delta)), x_(std::move(x)) {
    const auto n = y_.size();
    if (static_cast<Eigen::Index>(delta_.size()) != n || x_.rows() != n) {
      throw InputError("y, delta and X must have the same number of rows");
    }
    if (x_.cols() < 1) throw InputError("design matrix needs at least the intercept column");
    if (n < x_.cols() + 2) throw InputError("need n >= p + 2 observations");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::isfinite(y_[j])) throw InputError("response values must be finite");
      if (delta_[j] != 0 && delta_[j] != 1) throw InputError("censoring indicator must be 0 or 1");
      if (x_(j, 0) != 1.0) throw InputError("first design column must be all ones");
      events_ += delta_[j];
    }
    if (!x_.allFinite()) throw InputError("covariates must be finite");
    if (events_ < 1) throw InputError("at least one uncensored observation is required");
    Eigen::ColPivHouseholderQR<MatrixXd> qr(x_);
    if (qr.rank() < x_.cols()) throw InputError("design matrix is rank deficient");
  }

  [[nodiscard]] const VectorXd& y() const noexcept { return y_; }
  [[nodiscard]] const std::vector<int>& delta() const noexcept { return delta_; }
  [[nodiscard]] const MatrixXd& x() const noexcept { return x_; }
  [[nodiscard]] Eigen::Index size() const noexcept { return y_.size(); }
  [[nodiscard]] Eigen::Index num_covariates() const noexcept { return x_.cols(); }
  [[nodiscard]] int events() const noexcept { return events_; }
  [[nodiscard]] bool event(Eigen::Index j) const { return delta_[static_cast<std::size_t>(j)] == 1; }

  // Same design and censoring pattern with a different response vector.
  [[nodiscard]] CensoredDataset with_response(VectorXd y) const {
    CensoredDataset copy = *this;
    if (y.size() != y_.size()) throw InputError("response length mismatch");
    copy.y_ = std::move(y);
    return copy;
  }

 private:
  VectorXd y_;
  std::vector<int> delta_;
  MatrixXd x_;
  int events_ = 0;
};

struct GevAftParams {
  VectorXd phi;
  double sigma;
  double xi;

  GevAftParams(VectorXd coefficients, double scale, double shape)
      : phi(std::move(coefficients)), sigma(scale), xi(shape) {
    if (!(sigma > 0.0)) throw DomainError("GEV scale must be positive");
    if (!(std::abs(xi) >= kShapeGuard)) throw ShapeTooSmallError(xi);
  }

  // Nuisance vector (phi, sigma).
  [[nodiscard]] VectorXd chi() const {
    VectorXd c(phi.size() + 1);
    c << phi, sigma;
    return c;
  }

  static GevAftParams from_chi(const VectorXd& chi, double xi) {
    return {chi.head(chi.size() - 1), chi[chi.size() - 1], xi};
  }
};

struct ZM {
  VectorXd z;
  VectorXd m;
};

inline ZM zm(const GevAftParams& params, const CensoredDataset& d) {
  ZM out;
  out.z = (d.y() - d.x() * params.phi) / params.sigma;
  out.m = (1.0 + params.xi * out.z.array()).matrix();
  return out;
}

inline bool feasible(const GevAftParams& params, const CensoredDataset& d) {
  const VectorXd m = zm(params, d).m;
  return (m.array() > 0.0).all() && m.allFinite();
}

// One observation's log-likelihood contribution, without the -log sigma of events.
inline double observation_loglik(double m, bool event, double xi) {
  if (!(m > 0.0)) return kNegInf;
  const double log_m = std::log(m);
  const double t = std::exp(-log_m / xi);
  if (event) return -(1.0 / xi + 1.0) * log_m - t;
  return std::log(-std::expm1(-t));
}

// Returns -infinity at infeasible points.
inline double profile_loglik(const GevAftParams& params, const CensoredDataset& d) {
  const VectorXd m = zm(params, d).m;
  double total = -static_cast<double>(d.events()) * std::log(params.sigma);
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    const double term = observation_loglik(m[j], d.event(j), params.xi);
    if (!std::isfinite(term)) return kNegInf;
    total += term;
  }
  return total;
}

// g_j = d l_j / d m_j.
inline double score_kernel(double m, bool event, double xi) {
  if (!(m > 0.0)) throw DomainError("score kernel requires m > 0");
  const double inv_xi = 1.0 / xi;
  const double t = std::exp(-std::log(m) * inv_xi);
  const double t_over_m = t / m;  // m^{-1/xi-1}
  if (event) return -(inv_xi + 1.0) / m + inv_xi * t_over_m;
  // 1 / (e^t - 1) written as e^{-t} / (1 - e^{-t}) so large t underflows to 0 cleanly
  const double w = std::exp(-t);
  return -inv_xi * t_over_m * w / (-std::expm1(-t));
}

// h_j = d g_j / d m_j.
inline double curvature_kernel(double m, bool event, double xi) {
  if (!(m > 0.0)) throw DomainError("curvature kernel requires m > 0");
  const double inv_xi = 1.0 / xi;
  const double t = std::exp(-std::log(m) * inv_xi);
  const double t_over_m = t / m;
  const double t_over_m2 = t_over_m / m;  // m^{-1/xi-2}
  if (event) return (inv_xi + 1.0) / (m * m) - inv_xi * (inv_xi + 1.0) * t_over_m2;
  const double w = std::exp(-t);
  const double den = -std::expm1(-t);
  return inv_xi * (inv_xi + 1.0) * t_over_m2 * w / den -
         inv_xi * inv_xi * t_over_m * t_over_m * w / (den * den);
}

namespace detail {

struct Kernels {
  VectorXd z;
  VectorXd g;
  VectorXd h;
};

inline Kernels kernels(const GevAftParams& params, const CensoredDataset& d, bool with_curvature) {
  ZM v = zm(params, d);
  if (!((v.m.array() > 0.0).all() && v.m.allFinite())) {
    throw InfeasibleModelError("parameters outside the support of at least one observation");
  }
  Kernels k{std::move(v.z), VectorXd(d.size()), VectorXd()};
  if (with_curvature) k.h.resize(d.size());
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    k.g[j] = score_kernel(v.m[j], d.event(j), params.xi);
    if (with_curvature) k.h[j] = curvature_kernel(v.m[j], d.event(j), params.xi);
  }
  return k;
}

}  // namespace detail

// Gradient of profile_loglik in (phi, sigma) at fixed xi.
inline VectorXd nuisance_score(const GevAftParams& params, const CensoredDataset& d) {
  const auto k = detail::kernels(params, d, false);
  const Eigen::Index p = d.num_covariates();
  const double a = params.xi / params.sigma;
  VectorXd score(p + 1);
  score.head(p) = -a * (d.x().transpose() * k.g);
  score[p] = -static_cast<double>(d.events()) / params.sigma - a * k.g.dot(k.z);
  return score;
}

// Size of the terms summed into each score component, max over components. Rounding in the
// score is proportional to this, which matters when a fit puts observations near the support edge.
inline double nuisance_score_scale(const GevAftParams& params, const CensoredDataset& d) {
  const auto k = detail::kernels(params, d, false);
  const Eigen::Index p = d.num_covariates();
  const double a = params.xi / params.sigma;
  const VectorXd abs_g = k.g.cwiseAbs();
  double scale = static_cast<double>(d.events()) / params.sigma + a * abs_g.dot(k.z.cwiseAbs());
  for (Eigen::Index s = 0; s < p; ++s) scale = std::max(scale, a * abs_g.dot(d.x().col(s).cwiseAbs()));
  return scale;
}

// Observed information j_chichi = -Hessian of profile_loglik in (phi, sigma) at fixed xi.
inline MatrixXd nuisance_information(const GevAftParams& params, const CensoredDataset& d) {
  const auto k = detail::kernels(params, d, true);
  const Eigen::Index p = d.num_covariates();
  const double xi = params.xi;
  const double s2 = params.sigma * params.sigma;
  const double a2 = xi * xi / s2;
  const auto& x = d.x();

  MatrixXd hess(p + 1, p + 1);
  hess.topLeftCorner(p, p) = a2 * (x.transpose() * k.h.asDiagonal() * x);
  const VectorXd cross_weights = (a2 * k.h.array() * k.z.array() + xi / s2 * k.g.array()).matrix();
  hess.block(0, p, p, 1) = x.transpose() * cross_weights;
  hess(p, p) = static_cast<double>(d.events()) / s2 +
               (a2 * k.h.array() * k.z.array().square() + 2.0 * xi / s2 * k.g.array() * k.z.array()).sum();
  hess.block(p, 0, 1, p) = hess.block(0, p, p, 1).transpose();
  return -hess;
}

// Rows (-x_j, -z_j) for events, evaluated at the full MLE; censored rows are zero. An event row
// equals (dF_j/dchi) / f_j. The overall sign is immaterial since only |det(D V)| is used.
inline MatrixXd vhat(const CensoredDataset& d, const GevAftParams& full_mle) {
  const Eigen::Index p = d.num_covariates();
  const VectorXd z = zm(full_mle, d).z;
  MatrixXd v = MatrixXd::Zero(d.size(), p + 1);
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if (!d.event(j)) continue;
    v.row(j).head(p) = -d.x().row(j);
    v(j, p) = -z[j];
  }
  return v;
}

// D_{aj} = d(score_a)/d y_j at (phi, sigma, xi), a (p+1) x n matrix.
inline MatrixXd data_derivative(const GevAftParams& params, const CensoredDataset& d) {
  const auto k = detail::kernels(params, d, true);
  const Eigen::Index p = d.num_covariates();
  const double xi = params.xi;
  const double s2 = params.sigma * params.sigma;
  MatrixXd dmat(p + 1, d.size());
  const VectorXd hw = -xi * xi / s2 * k.h;
  dmat.topRows(p) = d.x().transpose() * hw.asDiagonal();
  dmat.row(p) = (hw.array() * k.z.array() - xi / s2 * k.g.array()).matrix().transpose();
  return dmat;
}

// Sample-space derivative l_{chi; chi_hat} ~= l_{chi; y} V_hat, evaluated at (chi_hat_xi, xi).
inline MatrixXd ell_chi_chihat(const GevAftParams& inner_at_xi, const MatrixXd& v_hat, const CensoredDataset& d) {
  return data_derivative(inner_at_xi, d) * v_hat;
}

// Components of the modified profile log-likelihood at one xi.
struct MpTerms {
  double profile = kNegInf;             // l_p(xi) = l(chi_hat_xi, xi)
  double log_det_info = kNegInf;        // log |det j_chichi|
  int info_det_sign = 0;                // sign of det j_chichi; <= 0 means a saddle, value is -inf
  double log_abs_det_sample_space = 0;  // log |det l_{chi; chi_hat}|
  double sample_space_condition = 0;    // 2-norm condition number of l_{chi; chi_hat}
  double value = kNegInf;               // profile + log_det_info / 2 - log_abs_det_sample_space
};

inline constexpr double kMaxSampleSpaceCondition = 1e12;

struct LogDet {
  double log_abs;
  int sign;
};

inline LogDet log_abs_det(const MatrixXd& a) {
  Eigen::PartialPivLU<MatrixXd> lu(a);
  const MatrixXd& packed = lu.matrixLU();
  double log_abs = 0.0;
  int sign = static_cast<int>(lu.permutationP().determinant());
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double u = packed(i, i);
    if (u == 0.0) return {kNegInf, 0};
    if (u < 0.0) sign = -sign;
    log_abs += std::log(std::abs(u));
  }
  return {log_abs, sign};
}

// Throws ModificationUndefinedError when l_{chi; chi_hat} is singular or has condition number
// above 1e12. A non-positive det j_chichi yields value = -inf with info_det_sign recorded.
inline MpTerms mp_terms(const GevAftParams& inner_at_xi, const CensoredDataset& d, const MatrixXd& v_hat) {
  MpTerms t;
  t.profile = profile_loglik(inner_at_xi, d);
  if (!std::isfinite(t.profile)) throw InfeasibleModelError("inner fit is outside the support");

  const MatrixXd ell = ell_chi_chihat(inner_at_xi, v_hat, d);
  Eigen::JacobiSVD<MatrixXd> svd(ell);
  const VectorXd sv = svd.singularValues();
  const double smin = sv[sv.size() - 1];
  t.sample_space_condition = smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
  if (!std::isfinite(t.sample_space_condition) || !ell.allFinite() ||
      t.sample_space_condition > kMaxSampleSpaceCondition) {
    throw ModificationUndefinedError(t.sample_space_condition);
  }
  t.log_abs_det_sample_space = sv.array().log().sum();

  const LogDet info = log_abs_det(nuisance_information(inner_at_xi, d));
  t.log_det_info = info.log_abs;
  t.info_det_sign = info.sign;
  if (info.sign > 0) t.value = t.profile + 0.5 * t.log_det_info - t.log_abs_det_sample_space;
  return t;
}

inline double mp_loglik(const GevAftParams& inner_at_xi, const CensoredDataset& d, const MatrixXd& v_hat) {
  return mp_terms(inner_at_xi, d, v_hat).value;
}

}  // namespace mplkit
