#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace letflab {

inline double normal_pdf(double x) {
  return 0.3989422804014326779399460599344 * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440084436210485);
}

/// Acklam's rational approximation of the standard normal quantile,
/// refined with one Halley step (abs error well below 1e-12).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("variance: need >= 2 values");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Empirical percentile by order statistic: the ceil(p*n)-th smallest value.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("percentile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("percentile: p outside [0,1]");
  std::sort(v.begin(), v.end());
  if (p == 0.0) return v.front();
  std::size_t k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  k = std::min(std::max<std::size_t>(k, 1), v.size());
  return v[k - 1];
}

namespace detail {

inline double lower_gamma_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 600; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double upper_gamma_cf(double a, double x) {
  // Lentz continued fraction for Q(a, x).
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 600; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

/// Regularized upper incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::domain_error("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::lower_gamma_series(a, x);
  return detail::upper_gamma_cf(a, x);
}

/// Survival function of the chi-squared distribution.
inline double chi2_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * x);
}

}  // namespace letflab
