#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "letflab/core/rng.hpp"
#include "letflab/core/stats.hpp"
#include "letflab/msmooth/msmooth.hpp"

namespace letflab::msmooth {

struct UniformBand {
  std::vector<double> grid;   // trimmed support J
  std::vector<double> fit;    // m_h on the grid
  std::vector<double> lower;
  std::vector<double> upper;
  double alpha = 0.0;
  double d_star = 0.0;
  bool degenerate = false;    // residuals were identically zero
};

/// Bootstrap uniform confidence band for the local linear M-smoother.
/// Residuals are resampled from the kernel-weighted conditional edf, centered
/// so their conditional mean vanishes at each data point; bootstrap samples
/// are built around the g-oversmoothed fit and refit with bandwidth h. The
/// sup statistic and the band share the scale factor
///   q(x) = sqrt(E_hat[psi^2 | x]) / ( sqrt(f_hat_X(x)) f_hat_{eps|x}(0) ).
inline UniformBand uniform_band(const std::vector<double>& x, const std::vector<double>& y,
                                const SmootherConfig& cfg, double g, int B, double alpha,
                                std::uint64_t seed) {
  cfg.validate();
  if (!(g > cfg.h)) throw std::invalid_argument("uniform_band: need oversmoothing g > h");
  if (B < 100) throw std::invalid_argument("uniform_band: need B >= 100");
  if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("uniform_band: alpha in (0,0.5)");
  const std::size_t n = x.size();

  // trimmed support J from empirical percentiles of x
  std::vector<double> xs = x;
  std::sort(xs.begin(), xs.end());
  const double j_lo = xs[static_cast<std::size_t>(cfg.support_trim * (n - 1))];
  const double j_hi = xs[static_cast<std::size_t>((1.0 - cfg.support_trim) * (n - 1))];

  std::vector<double> grid;
  for (double v : cfg.eval_grid)
    if (v >= j_lo && v <= j_hi) grid.push_back(v);
  if (grid.empty()) throw std::invalid_argument("uniform_band: eval_grid misses the support");

  SmootherConfig on_grid = cfg;
  on_grid.eval_grid = grid;

  const LlmFit fit_h = fit_llm(x, y, on_grid);
  SmootherConfig over = on_grid;
  over.h = g;
  over.huber_c = fit_h.huber_c_used;
  const LlmFit fit_g = fit_llm(x, y, over);

  UniformBand band;
  band.grid = grid;
  band.fit = fit_h.grid_fit;
  band.alpha = alpha;

  // kernel weight rows at data points (for the conditional edf) and at grid
  // points (for the scale pieces); x never changes across replicates
  std::vector<std::vector<double>> w_data(n), w_grid(grid.size());
  for (std::size_t t = 0; t < n; ++t) w_data[t] = detail::kernel_row(x, x[t], cfg.h, cfg.kernel);
  for (std::size_t j = 0; j < grid.size(); ++j)
    w_grid[j] = detail::kernel_row(x, grid[j], cfg.h, cfg.kernel);

  // conditional means of the raw residuals; centered pool values
  std::vector<double> cond_mean(n, 0.0), centered(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double sw = 0.0, sv = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      sw += w_data[t][u];
      sv += w_data[t][u] * fit_h.residuals[u];
    }
    cond_mean[t] = sv / sw;
  }
  for (std::size_t t = 0; t < n; ++t) centered[t] = fit_h.residuals[t] - cond_mean[t];

  double res_scale = 0.0;
  for (double r : fit_h.residuals) res_scale = std::max(res_scale, std::fabs(r));
  if (res_scale == 0.0) {
    band.degenerate = true;
    band.lower = band.fit;
    band.upper = band.fit;
    return band;
  }

  // scale factor q on the grid
  std::vector<double> q(grid.size());
  {
    double sd = 0.0, mean_c = 0.0;
    for (double r : centered) mean_c += r;
    mean_c /= n;
    for (double r : centered) sd += (r - mean_c) * (r - mean_c);
    sd = std::sqrt(sd / std::max<std::size_t>(n - 1, 1));
    const double h_e = std::max(1.06 * sd * std::pow(static_cast<double>(n), -0.2), 1e-12);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double sw = 0.0, s_psi2 = 0.0, s_f0 = 0.0;
      for (std::size_t u = 0; u < n; ++u) {
        const double w = w_grid[j][u];
        sw += w;
        const double psi = huber_psi(centered[u], fit_h.huber_c_used);
        s_psi2 += w * psi * psi;
        s_f0 += w * normal_pdf(centered[u] / h_e) / h_e;
      }
      const double e_psi2 = s_psi2 / sw;
      const double f_eps0 = s_f0 / sw;
      const double f_x = sw / (static_cast<double>(n) * cfg.h);
      q[j] = std::sqrt(e_psi2) / (std::sqrt(f_x) * f_eps0);
    }
  }

  // per-position sampling CDF over the residual pool
  std::vector<std::vector<double>> cdf(n, std::vector<double>(n));
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      acc += w_data[t][u];
      cdf[t][u] = acc;
    }
    for (std::size_t u = 0; u < n; ++u) cdf[t][u] /= acc;
  }

  std::vector<double> d(B);
  std::vector<double> y_star(n);
  for (int b = 0; b < B; ++b) {
    RandomStream rng = RandomStream::derive(seed, "msmooth.band", static_cast<std::uint64_t>(b));
    for (std::size_t t = 0; t < n; ++t) {
      const double udraw = rng.next_uniform();
      const auto it = std::lower_bound(cdf[t].begin(), cdf[t].end(), udraw);
      const std::size_t pick = std::min<std::size_t>(it - cdf[t].begin(), n - 1);
      y_star[t] = fit_g.data_fit[t] + (fit_h.residuals[pick] - cond_mean[t]);
    }
    double sup = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      bool flagged = false;
      const double refit = detail::irls_at(x, y_star, w_grid[j], grid[j], fit_h.huber_c_used,
                                           &flagged);
      if (flagged) continue;
      sup = std::max(sup, std::fabs(refit - fit_g.grid_fit[j]) / q[j]);
    }
    d[b] = sup;
  }

  std::sort(d.begin(), d.end());
  const std::size_t rank =
      std::min<std::size_t>(static_cast<std::size_t>(std::ceil((1.0 - alpha) * B)), B) - 1;
  band.d_star = d[rank];

  band.lower.resize(grid.size());
  band.upper.resize(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double half = band.d_star * q[j];
    band.lower[j] = band.fit[j] - half;
    band.upper[j] = band.fit[j] + half;
  }
  return band;
}

struct OverlapProfile {
  bool disjoint_everywhere = false;
  std::vector<double> overlap_length;  // per grid point
};

/// Whether two bands are disjoint at every shared grid point.
inline OverlapProfile bands_disjoint(const UniformBand& a, const UniformBand& b) {
  if (a.grid.size() != b.grid.size())
    throw std::invalid_argument("bands_disjoint: grid size mismatch");
  for (std::size_t j = 0; j < a.grid.size(); ++j)
    if (std::fabs(a.grid[j] - b.grid[j]) > 1e-12)
      throw std::invalid_argument("bands_disjoint: grids differ");

  OverlapProfile prof;
  prof.disjoint_everywhere = true;
  prof.overlap_length.resize(a.grid.size());
  for (std::size_t j = 0; j < a.grid.size(); ++j) {
    const double lo = std::max(a.lower[j], b.lower[j]);
    const double hi = std::min(a.upper[j], b.upper[j]);
    prof.overlap_length[j] = std::max(0.0, hi - lo);
    if (hi >= lo) prof.disjoint_everywhere = false;
  }
  return prof;
}

}  // namespace letflab::msmooth
