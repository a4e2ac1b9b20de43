#pragma once

#include <cmath>
#include <stdexcept>

#include "letflab/condvar/bessel.hpp"
#include "letflab/heston/heston.hpp"

namespace letflab::condvar {

/// Density of the noncentral chi-squared distribution with dof degrees of
/// freedom and noncentrality lambda, evaluated in log space:
/// f(x) = 0.5 e^{-(x+lambda)/2} (x/lambda)^{dof/4 - 1/2} I_{dof/2-1}(sqrt(lambda x)).
inline double noncentral_chi2_pdf(double x, double dof, double lambda) {
  if (!(x > 0.0)) throw std::domain_error("noncentral_chi2_pdf: x must be > 0");
  if (!(dof > 0.0)) throw std::domain_error("noncentral_chi2_pdf: dof must be > 0");
  if (lambda < 0.0) throw std::domain_error("noncentral_chi2_pdf: lambda must be >= 0");

  if (lambda < 1e-300) {
    // central limit of the formula
    const double h = 0.5 * dof;
    return std::exp((h - 1.0) * std::log(x) - 0.5 * x - std::lgamma(h) - h * 0.6931471805599453);
  }
  const double logf = std::log(0.5) - 0.5 * (x + lambda) +
                      (0.25 * dof - 0.5) * (std::log(x) - std::log(lambda)) +
                      log_bessel_i(0.5 * dof - 1.0, std::sqrt(lambda * x));
  return std::exp(logf);
}

/// CIR transition density of V_T given V_0 under the Heston variance
/// dynamics, in the closed form with Bessel factor; equals the scaled
/// noncentral chi-squared law with dof 4*kappa*theta/sigma^2.
inline double variance_transition_pdf(double v_t, double v0, const heston::HestonParams& p,
                                      double ttm) {
  if (!(v_t > 0.0) || !(v0 > 0.0))
    throw std::domain_error("variance_transition_pdf: variances must be > 0");
  p.validate();
  const double sig2 = p.sigma * p.sigma;
  const double emkt = std::exp(-p.kappa * ttm);
  const double scale = sig2 * (1.0 - emkt);
  const double nu = 2.0 * p.kappa * p.theta / sig2 - 1.0;
  const double bessel_arg = 4.0 * p.kappa * std::exp(-0.5 * p.kappa * ttm) *
                            std::sqrt(v0 * v_t) / scale;
  const double logf = std::log(2.0 * p.kappa / scale) + p.kappa * p.kappa * p.theta * ttm / sig2 -
                      0.5 * p.kappa * ttm - 2.0 * p.kappa * (v_t + emkt * v0) / scale +
                      (p.kappa * p.theta / sig2 - 0.5) * (std::log(v_t) - std::log(v0)) +
                      log_bessel_i(nu, bessel_arg);
  return std::exp(logf);
}

/// Mean and variance of V_T | V_0 (closed-form CIR moments).
inline void variance_transition_moments(double v0, const heston::HestonParams& p, double ttm,
                                        double& mean, double& var) {
  const double e = std::exp(-p.kappa * ttm);
  mean = p.theta + (v0 - p.theta) * e;
  var = v0 * p.sigma * p.sigma * e * (1.0 - e) / p.kappa +
        p.theta * p.sigma * p.sigma * (1.0 - e) * (1.0 - e) / (2.0 * p.kappa);
}

}  // namespace letflab::condvar
