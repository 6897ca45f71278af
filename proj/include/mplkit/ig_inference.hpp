#pragma once

// Profile and modified profile likelihood for the inverse Gaussian dispersion lambda, with the
// mean mu as nuisance parameter.
//
// With mu_hat = mean(x) for every lambda, the profile curve is
//   lp(lambda)  = (n/2) log lambda - lambda S / 2,      S = (1/xbar^2) sum (x_i - xbar)^2 / x_i
// and the modified curve subtracts half the log observed information on mu:
//   lmp(lambda) = lp(lambda) - (1/2) log(n lambda / xbar^3).
// Additive constants are dropped. Both curves are maximized in closed form, lambda = n/S and
// lambda = (n-1)/S.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "mplkit/errors.hpp"

namespace mplkit {

class IgSample {
 public:
  explicit IgSample(std::vector<double> xs) : xs_(std::move(xs)) {
    if (xs_.size() < 2) throw InputError("IG sample needs at least 2 observations");
    double sum = 0.0;
    double inv_sum = 0.0;
    for (double x : xs_) {
      if (!(x > 0.0) || !std::isfinite(x)) throw InputError("IG observations must be positive and finite");
      sum += x;
      inv_sum += 1.0 / x;
    }
    mean_ = sum / static_cast<double>(xs_.size());
    inv_sum_ = inv_sum;
    double acc = 0.0;
    for (double x : xs_) {
      acc += (x - mean_) * (x - mean_) / x;
      spread_ = std::max(spread_, std::abs(x - mean_));
    }
    s_ = acc / (mean_ * mean_);
  }

  [[nodiscard]] std::span<const double> values() const noexcept { return xs_; }
  [[nodiscard]] std::size_t size() const noexcept { return xs_.size(); }
  [[nodiscard]] double mean() const noexcept { return mean_; }

  // S = (1/xbar^2) sum (x_i - xbar)^2 / x_i, accumulated in its defining (cancellation-free) form.
  [[nodiscard]] double s_stat() const noexcept { return s_; }

  // S through the identity sum(1/x_i) - n/xbar.
  [[nodiscard]] double s_stat_reciprocal_form() const noexcept {
    return inv_sum_ - static_cast<double>(xs_.size()) / mean_;
  }

  // Every observation equal to the mean up to rounding.
  [[nodiscard]] bool degenerate() const noexcept {
    return spread_ <= 8.0 * std::numeric_limits<double>::epsilon() * mean_;
  }

 private:
  std::vector<double> xs_;
  double mean_ = 0.0;
  double inv_sum_ = 0.0;
  double s_ = 0.0;
  double spread_ = 0.0;
};

struct IgFit {
  double lambda_hat_p;
  double lambda_hat_mp;
  double mu_hat;
  double s_stat;
  double loglik_p_at_max;
  double loglik_mp_at_max;
};

inline void require_positive_lambda(double lambda) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
}

inline double profile_loglik_lambda(const IgSample& s, double lambda) {
  require_positive_lambda(lambda);
  const double n = static_cast<double>(s.size());
  return 0.5 * n * std::log(lambda) - 0.5 * lambda * s.s_stat();
}

// Observed information on mu at mu_hat = xbar.
inline double ig_mu_information(const IgSample& s, double lambda) {
  const double xbar = s.mean();
  return static_cast<double>(s.size()) * lambda / (xbar * xbar * xbar);
}

inline double modified_profile_loglik_lambda(const IgSample& s, double lambda) {
  return profile_loglik_lambda(s, lambda) - 0.5 * std::log(ig_mu_information(s, lambda));
}

inline IgFit fit_ig(const IgSample& s) {
  const double stat = s.s_stat();
  if (s.degenerate() || !(stat > 0.0)) {
    throw DegenerateSampleError("degenerate sample, dispersion unbounded (all observations equal)");
  }
  const double n = static_cast<double>(s.size());
  IgFit fit{};
  fit.mu_hat = s.mean();
  fit.s_stat = stat;
  fit.lambda_hat_p = n / stat;
  fit.lambda_hat_mp = (n - 1.0) / stat;
  fit.loglik_p_at_max = profile_loglik_lambda(s, fit.lambda_hat_p);
  fit.loglik_mp_at_max = modified_profile_loglik_lambda(s, fit.lambda_hat_mp);
  return fit;
}

}  // namespace mplkit
