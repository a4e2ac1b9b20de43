#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "letflab/core/csv.hpp"
#include "letflab/heston/heston.hpp"

namespace letflab::condvar {

/// E[ integrated variance | terminal level in bin ] tabulated over unlevered
/// log-moneyness bin centers at a fixed horizon. Empty bins keep count 0 and
/// a NaN value; they are never interpolated silently.
struct CondVarCurve {
  double ttm = 0.0;
  std::vector<double> lm_grid;      // bin centers, strictly increasing
  std::vector<double> values;       // conditional expected integrated variance
  std::vector<long> bin_counts;

  bool empty_bin(std::size_t k) const { return bin_counts[k] == 0; }

  void validate() const {
    if (lm_grid.size() != values.size() || lm_grid.size() != bin_counts.size())
      throw std::domain_error("condvar curve: length mismatch");
    for (std::size_t i = 1; i < lm_grid.size(); ++i)
      if (!(lm_grid[i] > lm_grid[i - 1]))
        throw std::domain_error("condvar curve: lm_grid must be strictly increasing");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (bin_counts[i] > 0 && !(values[i] >= 0.0))
        throw std::domain_error("condvar curve: values must be >= 0");
  }

  /// Linear interpolation over nonempty bins; clamps at the end points.
  /// Returns the value and sets `extrapolated` when lm falls outside the
  /// covered range.
  double interpolate(double lm, bool* extrapolated = nullptr) const {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < lm_grid.size(); ++i)
      if (!empty_bin(i)) {
        xs.push_back(lm_grid[i]);
        ys.push_back(values[i]);
      }
    if (xs.empty()) throw std::runtime_error("condvar curve: all bins empty");
    if (extrapolated) *extrapolated = (lm < xs.front() || lm > xs.back());
    if (lm <= xs.front()) return ys.front();
    if (lm >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), lm);
    const std::size_t j = static_cast<std::size_t>(it - xs.begin());
    const double w = (lm - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return ys[j - 1] + w * (ys[j] - ys[j - 1]);
  }
};

/// Bin-approximate E[ int_0^T sigma_t^2 dt | S_T in bin_k ] from simulated
/// paths. lm_grid holds bin centers whose images S* = s0 e^{lm} form an
/// equidistant grid; bins are half-open (l_k, l_{k+1}] in the S* coordinate.
/// The bin value is h/(N Q(k)) * sum over paths in the bin of the step-variance
/// sum, i.e. the plain average of path-wise integrated variance.
inline CondVarCurve mc_conditional_iv(const std::vector<heston::PathSample>& paths, double s0,
                                      const std::vector<double>& lm_grid, double ttm) {
  if (paths.empty()) throw std::invalid_argument("mc_conditional_iv: no paths");
  if (lm_grid.size() < 1) throw std::invalid_argument("mc_conditional_iv: empty lm grid");

  const std::size_t m = lm_grid.size();
  std::vector<double> centers(m);
  for (std::size_t i = 0; i < m; ++i) centers[i] = s0 * std::exp(lm_grid[i]);
  if (m >= 2) {
    const double step = centers[1] - centers[0];
    for (std::size_t i = 1; i < m; ++i) {
      const double d = centers[i] - centers[i - 1];
      if (!(d > 0.0) || std::fabs(d - step) > 1e-9 * std::fabs(step))
        throw std::invalid_argument(
            "mc_conditional_iv: lm_grid must be equidistant in the S* coordinate");
    }
  }
  const double half = m >= 2 ? 0.5 * (centers[1] - centers[0]) : 0.5 * centers[0];

  std::vector<double> edges(m + 1);
  for (std::size_t i = 0; i < m; ++i) edges[i] = centers[i] - half;
  edges[m] = centers[m - 1] + half;

  CondVarCurve curve;
  curve.ttm = ttm;
  curve.lm_grid = lm_grid;
  curve.values.assign(m, 0.0);
  curve.bin_counts.assign(m, 0);

  for (const auto& path : paths) {
    const double s = path.terminal_price;
    if (!(s > edges.front()) || s > edges.back()) continue;  // outside the grid
    const auto it = std::lower_bound(edges.begin(), edges.end(), s);
    std::size_t j = static_cast<std::size_t>(it - edges.begin());
    if (j == 0) continue;           // s == edges[0] is excluded by (l_0, l_1]
    const std::size_t k = j - 1;    // s in (edges[k], edges[k+1]]
    curve.values[k] += path.integrated_variance;
    curve.bin_counts[k] += 1;
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (curve.bin_counts[k] > 0)
      curve.values[k] /= static_cast<double>(curve.bin_counts[k]);
    else
      curve.values[k] = std::numeric_limits<double>::quiet_NaN();
  }
  return curve;
}

/// Replace the curve values by a least-squares polynomial fit over the
/// nonempty bins, evaluated at every bin center and clamped at zero.
inline CondVarCurve smooth_curve(const CondVarCurve& curve, int degree) {
  if (degree < 0) throw std::invalid_argument("smooth_curve: degree must be >= 0");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < curve.lm_grid.size(); ++i)
    if (!curve.empty_bin(i)) {
      xs.push_back(curve.lm_grid[i]);
      ys.push_back(curve.values[i]);
    }
  if (static_cast<int>(xs.size()) < degree + 1)
    throw std::invalid_argument("smooth_curve: need at least degree+1 nonempty bins");

  // centre/scale the abscissa for conditioning
  const double x0 = 0.5 * (xs.front() + xs.back());
  const double sc = std::max(1e-12, 0.5 * (xs.back() - xs.front()));
  const auto design = [&](double x, Eigen::RowVectorXd& row) {
    double t = (x - x0) / sc, p = 1.0;
    for (int d = 0; d <= degree; ++d) {
      row(d) = p;
      p *= t;
    }
  };

  Eigen::MatrixXd A(xs.size(), degree + 1);
  Eigen::VectorXd b(xs.size());
  Eigen::RowVectorXd row(degree + 1);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    design(xs[i], row);
    A.row(i) = row;
    b(i) = ys[i];
  }
  const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);

  CondVarCurve out = curve;
  for (std::size_t i = 0; i < out.lm_grid.size(); ++i) {
    design(out.lm_grid[i], row);
    out.values[i] = std::max(0.0, row.dot(coef));
  }
  return out;
}

inline void write_curve(const std::string& path, const CondVarCurve& curve,
                        const std::vector<std::string>& comment_lines = {}) {
  csv::Writer w(path);
  for (const auto& c : comment_lines) w.comment(c);
  w.comment("ttm=" + csv::num(curve.ttm));
  w.row({"lm", "value", "count"});
  for (std::size_t i = 0; i < curve.lm_grid.size(); ++i)
    w.row({csv::num(curve.lm_grid[i]),
           curve.empty_bin(i) ? "" : csv::num(curve.values[i]),
           std::to_string(curve.bin_counts[i])});
}

inline CondVarCurve read_curve(const std::string& path) {
  const auto t = csv::read_file(path);
  CondVarCurve curve;
  for (const auto& c : t.comments) {
    const auto pos = c.find("ttm=");
    if (pos != std::string::npos) curve.ttm = std::stod(c.substr(pos + 4));
  }
  const int ci_lm = t.column("lm"), ci_v = t.column("value"), ci_n = t.column("count");
  if (ci_lm < 0 || ci_v < 0 || ci_n < 0)
    throw std::runtime_error("condvar csv: expected columns lm,value,count");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    curve.lm_grid.push_back(csv::to_double(t.rows[i][ci_lm], "lm", i + 2));
    const auto v = csv::to_optional_double(t.rows[i][ci_v], "value", i + 2);
    curve.values.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
    curve.bin_counts.push_back(static_cast<long>(csv::to_double(t.rows[i][ci_n], "count", i + 2)));
  }
  curve.validate();
  return curve;
}

}  // namespace letflab::condvar
