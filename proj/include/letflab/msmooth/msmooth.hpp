#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "letflab/core/stats.hpp"

namespace letflab::msmooth {

enum class Kernel { gaussian, quartic };

inline double kernel_value(Kernel k, double u) {
  switch (k) {
    case Kernel::gaussian:
      return 0.3989422804014326779399460599344 * std::exp(-0.5 * u * u);
    case Kernel::quartic: {
      if (std::fabs(u) >= 1.0) return 0.0;
      const double t = 1.0 - u * u;
      return 0.9375 * t * t;
    }
  }
  return 0.0;
}

struct SmootherConfig {
  Kernel kernel = Kernel::gaussian;
  double h = 0.1;            // bandwidth
  double huber_c = std::numeric_limits<double>::quiet_NaN();  // NaN: set from pilot MAD
  std::vector<double> eval_grid;
  double support_trim = 0.05;

  void validate() const {
    if (!(h > 0.0)) throw std::domain_error("smoother: bandwidth must be > 0");
    if (!(support_trim >= 0.0 && support_trim < 0.5))
      throw std::domain_error("smoother: support_trim must be in [0, 0.5)");
  }
};

inline double huber_psi(double u, double c) {
  if (u > c) return c;
  if (u < -c) return -c;
  return u;
}

inline double huber_rho(double u, double c) {
  const double a = std::fabs(u);
  return a <= c ? 0.5 * u * u : c * a - 0.5 * c * c;
}

struct LlmFit {
  std::vector<double> grid_fit;   // alpha at each eval_grid point (NaN when flagged)
  std::vector<bool> grid_flag;    // empty kernel neighborhood
  std::vector<double> data_fit;   // alpha at each data point
  std::vector<double> residuals;  // y - data_fit
  double huber_c_used = 0.0;
};

namespace detail {

/// IRLS for the local Huber M-objective at one location. Kernel weights are
/// passed in; returns the local intercept (the fitted value).
inline double irls_at(const std::vector<double>& x, const std::vector<double>& y,
                      const std::vector<double>& w, double x0, double c, bool* flagged,
                      int skip_index = -1) {
  const std::size_t n = x.size();
  double sw = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (static_cast<int>(i) != skip_index) sw += w[i];
  if (!(sw > 1e-300)) {
    if (flagged) *flagged = true;
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (flagged) *flagged = false;

  const double y_scale = [&] {
    double m = 1.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(y[i]));
    return m;
  }();

  // weighted least squares start
  double a = 0.0, b = 0.0;
  const auto solve_wls = [&](const std::vector<double>& u, double& ao, double& bo) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<int>(i) == skip_index) continue;
      const double wi = w[i] * u[i];
      const double dx = x[i] - x0;
      s0 += wi;
      s1 += wi * dx;
      s2 += wi * dx * dx;
      t0 += wi * y[i];
      t1 += wi * y[i] * dx;
    }
    const double det = s0 * s2 - s1 * s1;
    if (std::fabs(det) < 1e-14 * std::max(s0 * s2, 1e-300)) {
      // locally collinear design: fall back to the weighted mean
      ao = t0 / s0;
      bo = 0.0;
    } else {
      ao = (s2 * t0 - s1 * t1) / det;
      bo = (s0 * t1 - s1 * t0) / det;
    }
  };

  std::vector<double> u(n, 1.0);
  solve_wls(u, a, b);

  const auto objective = [&](double ai, double bi) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<int>(i) == skip_index) continue;
      s += w[i] * huber_rho(y[i] - ai - bi * (x[i] - x0), c);
    }
    return s;
  };

  double obj = objective(a, b);
  for (int it = 0; it < 100; ++it) {
    // gradient of the M-objective
    double g0 = 0.0, g1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<int>(i) == skip_index) continue;
      const double r = y[i] - a - b * (x[i] - x0);
      const double psi = huber_psi(r, c);
      g0 += w[i] * psi;
      g1 += w[i] * psi * (x[i] - x0);
    }
    if (std::max(std::fabs(g0), std::fabs(g1)) < 1e-10 * sw * y_scale) break;

    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<int>(i) == skip_index) continue;
      const double r = y[i] - a - b * (x[i] - x0);
      u[i] = std::fabs(r) <= c ? 1.0 : c / std::fabs(r);
    }
    double a_new, b_new;
    solve_wls(u, a_new, b_new);
    double obj_new = objective(a_new, b_new);
    int damp = 0;
    while (obj_new > obj + 1e-15 * std::fabs(obj) && damp < 30) {
      a_new = 0.5 * (a + a_new);  // damping on oscillation
      b_new = 0.5 * (b + b_new);
      obj_new = objective(a_new, b_new);
      ++damp;
    }
    if (std::fabs(a_new - a) < 1e-15 * y_scale && std::fabs(b_new - b) < 1e-15 * y_scale) {
      a = a_new;
      b = b_new;
      break;
    }
    a = a_new;
    b = b_new;
    obj = obj_new;
  }
  return a;
}

inline std::vector<double> kernel_row(const std::vector<double>& x, double x0, double h,
                                      Kernel k) {
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = kernel_value(k, (x0 - x[i]) / h);
  return w;
}

/// Pilot scale: 1.345 * 1.4826 * MAD of plain local-linear LS residuals.
inline double auto_huber_c(const std::vector<double>& x, const std::vector<double>& y, double h,
                           Kernel k) {
  const double big = std::numeric_limits<double>::max() / 4.0;
  std::vector<double> abs_res;
  abs_res.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const auto w = kernel_row(x, x[t], h, k);
    bool flagged = false;
    const double fit = irls_at(x, y, w, x[t], big, &flagged);
    if (!flagged) abs_res.push_back(y[t] - fit);
  }
  if (abs_res.empty()) return 1.0;
  const double med = median_of(abs_res);
  for (auto& r : abs_res) r = std::fabs(r - med);
  const double mad = median_of(abs_res);
  return std::max(1.345 * 1.4826 * mad, 1e-12);
}

}  // namespace detail

/// Local linear M-smoother with Huber loss: at each evaluation point the
/// intercept of the locally weighted robust line. Kernel weights K_h(x - X_i).
inline LlmFit fit_llm(const std::vector<double>& x, const std::vector<double>& y,
                      const SmootherConfig& cfg) {
  cfg.validate();
  if (x.size() != y.size()) throw std::invalid_argument("fit_llm: x/y length mismatch");
  if (x.size() < 10) throw std::invalid_argument("fit_llm: need at least 10 points");

  LlmFit fit;
  fit.huber_c_used = std::isnan(cfg.huber_c)
                         ? detail::auto_huber_c(x, y, cfg.h, cfg.kernel)
                         : cfg.huber_c;
  if (!(fit.huber_c_used > 0.0)) throw std::domain_error("fit_llm: huber_c must be > 0");

  fit.grid_fit.reserve(cfg.eval_grid.size());
  fit.grid_flag.reserve(cfg.eval_grid.size());
  for (double x0 : cfg.eval_grid) {
    bool flagged = false;
    const auto w = detail::kernel_row(x, x0, cfg.h, cfg.kernel);
    fit.grid_fit.push_back(detail::irls_at(x, y, w, x0, fit.huber_c_used, &flagged));
    fit.grid_flag.push_back(flagged);
  }
  fit.data_fit.reserve(x.size());
  fit.residuals.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    bool flagged = false;
    const auto w = detail::kernel_row(x, x[t], cfg.h, cfg.kernel);
    const double v = detail::irls_at(x, y, w, x[t], fit.huber_c_used, &flagged);
    fit.data_fit.push_back(v);
    fit.residuals.push_back(y[t] - v);
  }
  return fit;
}

/// Bandwidth by leave-one-out cross-validation under the Huber prediction
/// loss; ties resolve to the smallest bandwidth.
inline double cv_bandwidth(const std::vector<double>& x, const std::vector<double>& y,
                           const SmootherConfig& base, const std::vector<double>& h_grid) {
  if (h_grid.empty()) throw std::invalid_argument("cv_bandwidth: empty bandwidth grid");
  std::vector<double> hs = h_grid;
  std::sort(hs.begin(), hs.end());

  double c = base.huber_c;
  if (std::isnan(c)) c = detail::auto_huber_c(x, y, hs[hs.size() / 2], base.kernel);

  double best_h = hs.front();
  double best_score = std::numeric_limits<double>::infinity();
  for (double h : hs) {
    double score = 0.0;
    bool usable = true;
    for (std::size_t t = 0; t < x.size() && usable; ++t) {
      const auto w = detail::kernel_row(x, x[t], h, base.kernel);
      bool flagged = false;
      const double pred = detail::irls_at(x, y, w, x[t], c, &flagged, static_cast<int>(t));
      if (flagged) {
        usable = false;
        break;
      }
      score += huber_rho(y[t] - pred, c);
    }
    // near-equal scores count as ties and keep the smaller bandwidth
    const bool improves =
        usable && (!std::isfinite(best_score) ||
                   score < best_score - 1e-9 * std::max(std::fabs(best_score), 1e-3));
    if (improves) {
      best_score = score;
      best_h = h;
    }
  }
  if (!std::isfinite(best_score))
    throw std::runtime_error("cv_bandwidth: no bandwidth produced usable predictions");
  return best_h;
}

}  // namespace letflab::msmooth
