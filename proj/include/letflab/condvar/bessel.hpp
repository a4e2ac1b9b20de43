#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace letflab::condvar {

namespace detail {

// Debye polynomials for the uniform large-order expansion.
inline std::complex<double> olver_u1(std::complex<double> t) {
  return (3.0 * t - 5.0 * t * t * t) / 24.0;
}
inline std::complex<double> olver_u2(std::complex<double> t) {
  const auto t2 = t * t;
  return t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0;
}
inline std::complex<double> olver_u3(std::complex<double> t) {
  const auto t2 = t * t;
  return t * t2 * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 - t2 * 425425.0))) / 414720.0;
}
inline std::complex<double> olver_u4(std::complex<double> t) {
  const auto t2 = t * t;
  return t2 * t2 *
         (4465125.0 +
          t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + t2 * 185910725.0)))) /
         39813120.0;
}

}  // namespace detail

/// log of the modified Bessel function of the first kind I_nu(z), complex
/// argument, real order nu > -1. Three regimes:
///   |z| <= 600            ascending series (any order)
///   |z| > 600, nu >= 30   Olver's uniform large-order expansion, I_nu(nu w)
///   |z| > 600, nu < 30    fixed-order asymptotic e^z/sqrt(2 pi z) sum a_k/z^k
/// The imaginary part of the result is defined up to 2 pi; callers only ever
/// exponentiate differences.
inline std::complex<double> log_bessel_i(double nu, std::complex<double> z) {
  if (!(nu > -1.0)) throw std::domain_error("log_bessel_i: order must be > -1");
  const double az = std::abs(z);
  if (az == 0.0) {
    if (nu == 0.0) return {0.0, 0.0};
    return {-std::numeric_limits<double>::infinity(), 0.0};
  }
  const double pi = 3.14159265358979323846;

  if (az <= 600.0) {
    // ascending series: (z/2)^nu sum_j (z^2/4)^j / (j! Gamma(nu+j+1))
    const std::complex<double> q = 0.25 * z * z;
    std::complex<double> term(1.0, 0.0), sum(1.0, 0.0);
    bool converged = false;
    for (int j = 1; j <= 4000; ++j) {
      term *= q / (static_cast<double>(j) * (nu + static_cast<double>(j)));
      sum += term;
      if (std::abs(term) < 1e-15 * std::abs(sum)) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw std::runtime_error("log_bessel_i: series did not converge for |z|=" +
                               std::to_string(az) + ", nu=" + std::to_string(nu));
    return nu * std::log(0.5 * z) - std::lgamma(nu + 1.0) + std::log(sum);
  }

  if (z.real() <= 0.0)
    throw std::runtime_error("log_bessel_i: large |z| with nonpositive real part unsupported");

  if (nu >= 30.0) {
    // I_nu(nu w) ~ e^{nu eta} / (sqrt(2 pi nu) (1+w^2)^{1/4}) * (1 + u1/nu + ...)
    const std::complex<double> w = z / nu;
    const std::complex<double> s = std::sqrt(1.0 + w * w);
    const std::complex<double> eta = s + std::log(w) - std::log(1.0 + s);
    const std::complex<double> t = 1.0 / s;
    const std::complex<double> corr = 1.0 + detail::olver_u1(t) / nu +
                                      detail::olver_u2(t) / (nu * nu) +
                                      detail::olver_u3(t) / (nu * nu * nu) +
                                      detail::olver_u4(t) / (nu * nu * nu * nu);
    return nu * eta - 0.5 * std::log(2.0 * pi * nu) - 0.5 * std::log(s) + std::log(corr);
  }

  // fixed-order asymptotic
  const double mu = 4.0 * nu * nu;
  std::complex<double> term(1.0, 0.0), sum(1.0, 0.0);
  double prev = 1.0;
  for (int k = 1; k <= 40; ++k) {
    const double num = mu - (2.0 * k - 1.0) * (2.0 * k - 1.0);
    term *= -num / (8.0 * static_cast<double>(k) * z);
    sum += term;
    const double t = std::abs(term);
    if (t < 1e-16 * std::abs(sum)) break;
    if (t > prev) break;  // asymptotic tail started to diverge
    prev = t;
  }
  return z - 0.5 * std::log(2.0 * pi * z) + std::log(sum);
}

/// Real-argument specialization (x > 0): returns log I_nu(x) as a double.
inline double log_bessel_i(double nu, double x) {
  return log_bessel_i(nu, std::complex<double>(x, 0.0)).real();
}

}  // namespace letflab::condvar
