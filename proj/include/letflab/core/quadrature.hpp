#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace letflab::quad {

struct Result {
  double value = 0.0;
  double abs_error = 0.0;  // estimate of the achieved absolute error
  bool converged = true;
};

namespace detail {

template <class F>
Result adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) {
    Result r;
    r.value = left + right + delta / 15.0;
    r.abs_error = std::fabs(delta) / 15.0;
    r.converged = depth > 0 || std::fabs(delta) <= 15.0 * tol;
    return r;
  }
  const Result rl = adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
  const Result rr = adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
  return Result{rl.value + rr.value, rl.abs_error + rr.abs_error, rl.converged && rr.converged};
}

}  // namespace detail

/// Adaptive Simpson on [a, b] to absolute tolerance tol.
template <class F>
Result adaptive_simpson(const F& f, double a, double b, double tol, int max_depth = 24) {
  const double fa = f(a), fb = f(b);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Trapezoid rule with n uniform intervals.
template <class F>
double trapezoid(const F& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

}  // namespace letflab::quad
