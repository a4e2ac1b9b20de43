#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "letflab/condvar/bessel.hpp"
#include "letflab/condvar/densities.hpp"
#include "letflab/core/quadrature.hpp"
#include "letflab/core/stats.hpp"
#include "letflab/heston/heston.hpp"

namespace letflab::condvar {

/// Characteristic function of the integrated variance given both variance
/// endpoints, phi_{V~|V_T,V_0}(omega), with gamma(omega) = sqrt(kappa^2 - 2 sigma^2 i omega)
/// and a ratio of modified Bessel functions of complex argument. Evaluated
/// fully in log space.
inline std::complex<double> integrated_var_cf_given_endpoints(double omega, double v0,
                                                              double v_t,
                                                              const heston::HestonParams& p,
                                                              double ttm) {
  if (!(v0 > 0.0) || !(v_t > 0.0))
    throw std::domain_error("integrated_var_cf: variance endpoints must be > 0");
  p.validate();
  const double sig2 = p.sigma * p.sigma;
  const double nu = 2.0 * p.kappa * p.theta / sig2 - 1.0;
  const std::complex<double> i(0.0, 1.0);
  const std::complex<double> gamma = std::sqrt(std::complex<double>(p.kappa * p.kappa, 0.0) -
                                               2.0 * sig2 * i * omega);
  const double k = p.kappa;

  const auto cothterm = [ttm](std::complex<double> x) {
    const std::complex<double> e = std::exp(-x * ttm);
    return x * (1.0 + e) / (1.0 - e);
  };
  const auto bessel_arg = [&](std::complex<double> x) {
    const std::complex<double> e = std::exp(-x * ttm);
    return std::sqrt(v_t * v0) * 4.0 * x * std::exp(-0.5 * x * ttm) / (sig2 * (1.0 - e));
  };

  const std::complex<double> emk = std::exp(-k * ttm);
  const std::complex<double> emg = std::exp(-gamma * ttm);
  std::complex<double> logphi = std::log(gamma) - std::log(std::complex<double>(k, 0.0)) -
                                0.5 * (gamma - k) * ttm + std::log(1.0 - emk) -
                                std::log(1.0 - emg) +
                                ((v_t + v0) / sig2) *
                                    (cothterm(std::complex<double>(k, 0.0)) - cothterm(gamma));
  logphi += log_bessel_i(nu, bessel_arg(gamma)) -
            log_bessel_i(nu, bessel_arg(std::complex<double>(k, 0.0)));
  return std::exp(logphi);
}

struct QuadratureSettings {
  int n_omega = 4096;       // trapezoid nodes for each CF inversion
  int n_vt = 385;           // nodes of the variance-endpoint integral
  int n_v = 361;            // nodes of the integrated-variance expectation
  double phi_cut = 1e-10;   // CF modulus at which the inversion is truncated
  double tail_mass = 1e-8;  // transition-law tail excluded by the v_T cutoff

  void validate() const {
    if (n_omega < 16 || n_vt < 9 || n_v < 9 || !(phi_cut > 0.0) || !(tail_mass > 0.0))
      throw std::domain_error("quadrature settings out of range");
  }
};

struct AnalyticCondIv {
  double value = 0.0;          // E[ integrated variance | X_T = log s0 + lm ]
  double normalization = 0.0;  // integral of the conditional density (should be ~1)
  double marginal_density = 0.0;
};

namespace detail {

/// Mean and standard deviation of V~ | endpoints from the CF: the mean from
/// the phase at a small frequency, the variance from the modulus (which is
/// insensitive to the large phase when the law is nearly deterministic).
inline void cond_iv_moments(double v0, double v_t, const heston::HestonParams& p, double ttm,
                            double& mean, double& sd) {
  const double scale = std::max(p.theta * ttm, 1e-10);
  const double d0 = 0.5 / scale;
  const auto phi0 = integrated_var_cf_given_endpoints(d0, v0, v_t, p, ttm);
  mean = std::arg(phi0) / d0;

  double delta = d0;
  double mod = std::abs(phi0);
  for (int it = 0; it < 60 && mod > 0.9; ++it) {
    delta *= 2.0;
    mod = std::abs(integrated_var_cf_given_endpoints(delta, v0, v_t, p, ttm));
  }
  const double var = mod > 0.0 ? -2.0 * std::log(std::min(mod, 1.0)) / (delta * delta) : 0.0;
  sd = std::sqrt(std::max(var, 0.0));
}

/// Composite-Simpson weight for node k of n (n odd).
inline double simpson_w(int k, int n, double h) {
  if (k == 0 || k == n - 1) return h / 3.0;
  return (k % 2 == 1) ? 4.0 * h / 3.0 : 2.0 * h / 3.0;
}

}  // namespace detail

/// E[ integrated variance | log(S_T/S_0) = lm ] assembled from the analytic
/// machinery: the conditional normal of X_T given (V~, V_T), the inverted CF
/// of V~ given endpoints, the CIR transition density of V_T, and the inverted
/// marginal CF of X_T. Four improper integrals in total; a failure in any of
/// them raises an error naming the integral.
inline AnalyticCondIv analytic_conditional_iv_detail(double lm, const heston::HestonParams& p,
                                                     const heston::CarryTerms& carry, double s0,
                                                     double ttm,
                                                     const QuadratureSettings& quad = {}) {
  quad.validate();
  p.validate();
  const double x_target = std::log(s0) + lm;

  // --- v_T window: lower edge near the support boundary (or 12 sd below the
  // mean when that is positive), upper edge at the ~(1 - tail_mass) quantile
  // of the transition law, located by right-tail quadrature ---
  double m_v, var_v;
  variance_transition_moments(p.v0, p, ttm, m_v, var_v);
  const double sd_v = std::sqrt(var_v);
  const double v_eps = std::max(1e-12, 1e-7 * m_v);
  const double v_lo = std::max(m_v - 12.0 * sd_v, v_eps);
  double v_hi = m_v + 12.0 * sd_v;
  {
    const auto pdf = [&](double v) { return variance_transition_pdf(v, p.v0, p, ttm); };
    bool ok = false;
    for (int expand = 0; expand < 12; ++expand) {
      const auto tail = quad::adaptive_simpson(pdf, v_hi, v_hi + 30.0 * sd_v, 0.01 * quad.tail_mass);
      if (tail.value <= quad.tail_mass) {
        ok = true;
        break;
      }
      v_hi += 6.0 * sd_v;
    }
    if (!ok)
      throw std::runtime_error(
          "analytic_conditional_iv: variance_endpoint_integral failed to capture the "
          "transition mass");
  }

  const int n_vt = quad.n_vt | 1;  // composite Simpson wants an odd count
  const double dv = (v_hi - v_lo) / (n_vt - 1);
  std::vector<double> v_grid(n_vt), f_v(n_vt);
  for (int k = 0; k < n_vt; ++k) {
    v_grid[k] = v_lo + k * dv;
    f_v[k] = variance_transition_pdf(v_grid[k], p.v0, p, ttm);
  }

  // --- integrated-variance window from CF moments at the window edges ---
  double iv_lo = 1e30, iv_hi = -1e30, sd_max = 0.0, mean_mid = 0.0;
  for (double v : {v_lo, m_v, v_hi}) {
    double m, s;
    detail::cond_iv_moments(p.v0, v, p, ttm, m, s);
    if (v == m_v) mean_mid = m;
    iv_lo = std::min(iv_lo, m - 12.0 * s);
    iv_hi = std::max(iv_hi, m + 24.0 * s);
    sd_max = std::max(sd_max, s);
  }
  iv_lo = std::max(iv_lo, 1e-8 * p.theta * ttm);

  const auto normal_pdf_at = [&](double iv, double v_t) {
    const double mu = std::log(s0) + (carry.r - carry.c) * ttm - 0.5 * iv +
                      (p.rho / p.sigma) * (v_t - p.v0 - p.kappa * p.theta * ttm + p.kappa * iv);
    const double s2 = (1.0 - p.rho * p.rho) * iv;
    const double z = x_target - mu;
    return std::exp(-0.5 * z * z / s2) / std::sqrt(2.0 * 3.14159265358979323846 * s2);
  };

  // --- marginal density of X_T by CF inversion (adaptive, tail-doubled) ---
  const auto marginal_integrand = [&](double w) {
    const auto z = std::exp(std::complex<double>(0.0, -w * x_target)) *
                   heston::logprice_cf({w, 0.0}, p, carry, s0, ttm);
    return z.real();
  };
  double f_x = 0.0;
  {
    double hi = 50.0 / std::sqrt(std::max(p.theta * ttm, 1e-6));
    auto r = quad::adaptive_simpson(marginal_integrand, 0.0, hi, 1e-12);
    if (!r.converged)
      throw std::runtime_error("analytic_conditional_iv: logprice_marginal_inversion failed");
    double total = r.value;
    for (int k = 0; k < 10; ++k) {
      const auto tail = quad::adaptive_simpson(marginal_integrand, hi, 2.0 * hi, 1e-12);
      total += tail.value;
      hi *= 2.0;
      if (std::fabs(tail.value) < 1e-13) break;
    }
    f_x = total / 3.14159265358979323846;
  }
  if (!(f_x > 0.0))
    throw std::runtime_error("analytic_conditional_iv: logprice_marginal_inversion returned a "
                             "nonpositive density");

  AnalyticCondIv out;
  out.marginal_density = f_x;

  // --- degenerate vol-of-vol: V~ | endpoints has no resolvable width ---
  if (sd_max < 1e-5 * std::max(mean_mid, 1e-12)) {
    double num = 0.0, den = 0.0;
    for (int k = 0; k < n_vt; ++k) {
      double m, s;
      detail::cond_iv_moments(p.v0, v_grid[k], p, ttm, m, s);
      const double w = detail::simpson_w(k, n_vt, dv) * f_v[k] * normal_pdf_at(m, v_grid[k]);
      num += w * m;
      den += w;
    }
    out.value = num / den;
    out.normalization = den / f_x;
    return out;
  }

  // --- invert the conditional CF of V~ for every v_T node ---
  const int n_iv = quad.n_v | 1;
  std::vector<double> iv_grid(n_iv);
  const double div = (iv_hi - iv_lo) / (n_iv - 1);
  for (int j = 0; j < n_iv; ++j) iv_grid[j] = iv_lo + j * div;

  std::vector<double> weight(n_iv, 0.0);  // joint density f_{V~, X_T} on the iv grid
  std::vector<std::complex<double>> phi(quad.n_omega + 1);
  for (int k = 0; k < n_vt; ++k) {
    // truncation point: |phi| below phi_cut
    double omega_hi = 4.0 / std::max(sd_max, 1e-12);
    bool found = false;
    for (int d = 0; d < 60; ++d) {
      if (std::abs(integrated_var_cf_given_endpoints(omega_hi, p.v0, v_grid[k], p, ttm)) <
          quad.phi_cut) {
        found = true;
        break;
      }
      omega_hi *= 2.0;
    }
    if (!found)
      throw std::runtime_error(
          "analytic_conditional_iv: variance_cf_inversion could not truncate the CF");

    const double dw = omega_hi / quad.n_omega;
    for (int iw = 0; iw <= quad.n_omega; ++iw)
      phi[iw] = integrated_var_cf_given_endpoints(iw * dw, p.v0, v_grid[k], p, ttm);

    const double wq = detail::simpson_w(k, n_vt, dv);
    for (int j = 0; j < n_iv; ++j) {
      // trapezoid of Re[e^{-i w v} phi(w)] via a rotation recurrence
      const std::complex<double> rot = std::exp(std::complex<double>(0.0, -dw * iv_grid[j]));
      std::complex<double> e(1.0, 0.0);
      double acc = 0.5 * phi[0].real();
      for (int iw = 1; iw < quad.n_omega; ++iw) {
        e *= rot;
        acc += (phi[iw] * e).real();
      }
      e *= rot;
      acc += 0.5 * (phi[quad.n_omega] * e).real();
      const double dens = acc * dw / 3.14159265358979323846;
      weight[j] += wq * f_v[k] * std::max(dens, 0.0) * normal_pdf_at(iv_grid[j], v_grid[k]);
    }
  }

  double num = 0.0, den = 0.0;
  for (int j = 0; j < n_iv; ++j) {
    const double tw = detail::simpson_w(j, n_iv, div);
    num += tw * iv_grid[j] * weight[j];
    den += tw * weight[j];
  }
  if (!(den > 0.0))
    throw std::runtime_error(
        "analytic_conditional_iv: integrated_variance_expectation degenerated to zero mass");
  out.value = num / den;
  out.normalization = den / f_x;
  return out;
}

inline double analytic_conditional_iv(double lm, const heston::HestonParams& p,
                                      const heston::CarryTerms& carry, double s0, double ttm,
                                      const QuadratureSettings& quad = {}) {
  return analytic_conditional_iv_detail(lm, p, carry, s0, ttm, quad).value;
}

}  // namespace letflab::condvar
