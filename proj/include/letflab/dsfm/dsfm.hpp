#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "letflab/dsfm/bspline.hpp"

namespace letflab::dsfm {

struct DayPanel {
  int t = 0;
  struct Point {
    double x_m = 0.0;  // moneyness coordinate in [0,1]
    double x_t = 0.0;  // maturity coordinate in [0,1]
    double y = 0.0;    // implied volatility
  };
  std::vector<Point> points;
};

struct ConvergenceReport {
  int iterations = 0;
  double objective = 0.0;       // final sum of squared residuals
  bool converged = false;
  int ridge_fallbacks = 0;      // rank-deficient day solves rescued by ridge
  std::vector<double> objective_trace;
};

/// Fitted dynamic semiparametric factor model: Y_tj ~ Z_t' A psi(X_tj) with
/// Z_t = (1, Z_t1..Z_tL). After fitting, m_1..m_L are orthonormal under the
/// fine-grid inner product, loadings are ordered by decreasing variance, and
/// each m_l has positive grid mean.
struct DsfmModel {
  BasisSpec basis;
  int L = 0;
  Eigen::MatrixXd A;  // (L+1) x K coefficients
  Eigen::MatrixXd Z;  // T x (L+1), first column identically 1
  ConvergenceReport report;
};

namespace detail {

struct PanelCache {
  Eigen::MatrixXd S;   // K x K moment psi psi'
  Eigen::VectorXd b;   // K cross-moment psi y
  double yy = 0.0;     // y'y
  Eigen::MatrixXd psi; // J_t x K design
  Eigen::VectorXd y;
};

inline std::vector<PanelCache> build_cache(const std::vector<DayPanel>& panels,
                                           const BasisSpec& basis) {
  std::vector<PanelCache> cache;
  cache.reserve(panels.size());
  const int k = basis.dim();
  for (const auto& panel : panels) {
    if (panel.points.empty()) throw std::invalid_argument("dsfm: a day panel has no points");
    PanelCache c;
    c.psi.resize(panel.points.size(), k);
    c.y.resize(panel.points.size());
    for (std::size_t j = 0; j < panel.points.size(); ++j) {
      const auto& pt = panel.points[j];
      if (pt.x_m < 0.0 || pt.x_m > 1.0 || pt.x_t < 0.0 || pt.x_t > 1.0)
        throw std::domain_error("dsfm: panel coordinates must lie in the unit square");
      tensor_row(basis, pt.x_m, pt.x_t, c.psi.row(j));
      c.y(j) = pt.y;
    }
    c.S = c.psi.transpose() * c.psi;
    c.b = c.psi.transpose() * c.y;
    c.yy = c.y.squaredNorm();
    cache.push_back(std::move(c));
  }
  return cache;
}

inline double objective_of(const std::vector<PanelCache>& cache, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& z) {
  double ssr = 0.0;
  for (std::size_t t = 0; t < cache.size(); ++t) {
    const Eigen::VectorXd zt = z.row(t).transpose();
    const Eigen::VectorXd coeff = a.transpose() * zt;  // K
    ssr += cache[t].yy - 2.0 * coeff.dot(cache[t].b) + coeff.dot(cache[t].S * coeff);
  }
  return ssr;
}

/// Gram matrix of the tensor basis under the 101x101-grid inner product
/// (trapezoid weights on each axis).
inline Eigen::MatrixXd grid_gram(const BasisSpec& basis, int nodes = 101) {
  const int k = basis.dim();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  Eigen::RowVectorXd row(k);
  const double lo_m = basis.knots_m.front(), hi_m = basis.knots_m.back();
  const double lo_t = basis.knots_t.front(), hi_t = basis.knots_t.back();
  for (int i = 0; i < nodes; ++i) {
    const double xm = lo_m + (hi_m - lo_m) * i / (nodes - 1);
    const double wm = (i == 0 || i == nodes - 1) ? 0.5 : 1.0;
    for (int j = 0; j < nodes; ++j) {
      const double xt = lo_t + (hi_t - lo_t) * j / (nodes - 1);
      const double wt = (j == 0 || j == nodes - 1) ? 0.5 : 1.0;
      tensor_row(basis, xm, xt, row);
      gram.noalias() += (wm * wt) * row.transpose() * row;
    }
  }
  gram /= static_cast<double>(nodes - 1) * (nodes - 1);
  return gram;
}

inline Eigen::RowVectorXd grid_mean_psi(const BasisSpec& basis, int nodes = 101) {
  const int k = basis.dim();
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(k);
  Eigen::RowVectorXd row(k);
  double wsum = 0.0;
  const double lo_m = basis.knots_m.front(), hi_m = basis.knots_m.back();
  const double lo_t = basis.knots_t.front(), hi_t = basis.knots_t.back();
  for (int i = 0; i < nodes; ++i) {
    const double xm = lo_m + (hi_m - lo_m) * i / (nodes - 1);
    const double wm = (i == 0 || i == nodes - 1) ? 0.5 : 1.0;
    for (int j = 0; j < nodes; ++j) {
      const double xt = lo_t + (hi_t - lo_t) * j / (nodes - 1);
      const double wt = (j == 0 || j == nodes - 1) ? 0.5 : 1.0;
      tensor_row(basis, xm, xt, row);
      mean += wm * wt * row;
      wsum += wm * wt;
    }
  }
  return mean / wsum;
}

}  // namespace detail

/// Alternating least squares for the DSFM. Closed-form half-steps
/// (A | Z) and (Z_t | A); the objective is monotone nonincreasing, checked
/// every iteration. Rank-deficient day solves fall back to a small ridge.
/// After convergence the loadings are centered into m_0, the factors are
/// orthonormalized against the grid Gram matrix, rotated so the loading
/// covariance is diagonal with decreasing variance, and sign-fixed to
/// positive grid means. Fitted values are unchanged by the transform.
inline DsfmModel fit(const std::vector<DayPanel>& panels, int L, const BasisSpec& basis,
                     double tol = 1e-7, int max_iter = 500,
                     const DsfmModel* warm_start = nullptr) {
  basis.validate();
  if (L < 0) throw std::invalid_argument("dsfm: L must be >= 0");
  const int T = static_cast<int>(panels.size());
  if (T < L + 2) throw std::invalid_argument("dsfm: need at least L+2 days");
  const int k = basis.dim();
  {
    std::size_t total = 0;
    for (const auto& p : panels) total += p.points.size();
    if (total < static_cast<std::size_t>(5 * k))
      throw std::invalid_argument("dsfm: need at least 5K observations in total");
  }

  const auto cache = detail::build_cache(panels, basis);
  const auto ridge_of = [&](const Eigen::MatrixXd& m) {
    return 1e-8 * m.trace() / static_cast<double>(k);
  };

  Eigen::MatrixXd A(L + 1, k);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(T, L + 1);
  Z.col(0).setOnes();
  int ridge_fallbacks = 0;

  if (warm_start) {
    if (warm_start->L > L || warm_start->basis.dim() != k)
      throw std::invalid_argument("dsfm: incompatible warm start");
    A.setZero();
    A.topRows(warm_start->L + 1) = warm_start->A;
    Z.leftCols(warm_start->L + 1) = warm_start->Z;
  } else {
    // per-day ridge projections, then a PCA of the coefficient vectors
    Eigen::MatrixXd C(T, k);
    for (int t = 0; t < T; ++t) {
      Eigen::MatrixXd m = cache[t].S;
      m.diagonal().array() += std::max(ridge_of(m), 1e-12);
      C.row(t) = m.ldlt().solve(cache[t].b).transpose();
    }
    const Eigen::RowVectorXd mean_c = C.colwise().mean();
    const Eigen::MatrixXd centered = C.rowwise() - mean_c;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered.transpose() * centered);
    A.row(0) = mean_c;
    for (int l = 1; l <= L; ++l) {
      const Eigen::VectorXd dir = eig.eigenvectors().col(k - l);  // descending order
      A.row(l) = dir.transpose();
      Z.col(l) = centered * dir;
    }
  }

  ConvergenceReport report;
  double obj = detail::objective_of(cache, A, Z);
  report.objective_trace.push_back(obj);

  int it = 0;
  for (; it < max_iter; ++it) {
    const Eigen::MatrixXd a_before = A;
    const Eigen::MatrixXd z_before = Z;
    const int fallbacks_before = ridge_fallbacks;

    // Z-step: per-day least squares for z_{t,1..L} given A
    if (L > 0) {
      const Eigen::MatrixXd B = A.bottomRows(L);      // L x K
      const Eigen::VectorXd a0 = A.row(0).transpose();
      for (int t = 0; t < T; ++t) {
        const Eigen::MatrixXd m = B * cache[t].S * B.transpose();
        const Eigen::VectorXd rhs = B * (cache[t].b - cache[t].S * a0);
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() == Eigen::Success &&
            llt.matrixLLT().diagonal().minCoeff() >
                1e-7 * std::sqrt(std::max(m.diagonal().maxCoeff(), 1e-300))) {
          Z.row(t).tail(L) = llt.solve(rhs).transpose();
        } else {
          Eigen::MatrixXd mr = m;
          mr.diagonal().array() += std::max(ridge_of(m), 1e-14);
          Z.row(t).tail(L) = mr.ldlt().solve(rhs).transpose();
          ++ridge_fallbacks;
        }
      }
    }

    // A-step: one global least squares over vec(A)
    {
      const int dim = (L + 1) * k;
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
      for (int t = 0; t < T; ++t) {
        const Eigen::VectorXd zt = Z.row(t).transpose();
        const Eigen::MatrixXd zz = zt * zt.transpose();
        for (int p = 0; p <= L; ++p) {
          for (int q = 0; q <= L; ++q)
            g.block(p * k, q * k, k, k).noalias() += zz(p, q) * cache[t].S;
          rhs.segment(p * k, k).noalias() += zt(p) * cache[t].b;
        }
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
      Eigen::VectorXd sol = ldlt.solve(rhs);
      if (!sol.allFinite() || (g * sol - rhs).norm() > 1e-6 * std::max(1.0, rhs.norm())) {
        g.diagonal().array() += std::max(ridge_of(g), 1e-14);
        sol = g.ldlt().solve(rhs);
        ++ridge_fallbacks;
      }
      Eigen::MatrixXd a_new(L + 1, k);
      for (int p = 0; p <= L; ++p) a_new.row(p) = sol.segment(p * k, k).transpose();
      A = a_new;
    }

    const double obj_new = detail::objective_of(cache, A, Z);
    if (obj_new > obj) {
      // exact half-steps can never go uphill; ridge-rescued ones can creep by
      // the regularization amount, in which case the previous iterate stands
      if (ridge_fallbacks == fallbacks_before && obj_new > obj * (1.0 + 1e-10) + 1e-12)
        throw std::runtime_error("dsfm: ALS objective increased without a ridge fallback");
      A = a_before;
      Z = z_before;
      report.converged = true;
      ++it;
      break;
    }
    report.objective_trace.push_back(obj_new);
    const double rel = (obj - obj_new) / std::max(obj, 1e-300);
    obj = obj_new;
    if (rel < tol) {
      report.converged = true;
      ++it;
      break;
    }
  }
  report.iterations = it;
  report.objective = obj;
  report.ridge_fallbacks = ridge_fallbacks;

  // ---- orthonormalization (fit-preserving) ----
  if (L > 0) {
    // centre the loadings; the mean surface moves into m_0
    const Eigen::RowVectorXd zbar = Z.rightCols(L).colwise().mean();
    A.row(0) += zbar * A.bottomRows(L);
    Z.rightCols(L).rowwise() -= zbar;

    const Eigen::MatrixXd gram = detail::grid_gram(basis);
    Eigen::MatrixXd B = A.bottomRows(L);
    const Eigen::MatrixXd gamma = B * gram * B.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(gamma);
    const Eigen::VectorXd ev = eg.eigenvalues().cwiseMax(1e-30);
    const Eigen::MatrixXd s_inv_half =
        eg.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
        eg.eigenvectors().transpose();
    const Eigen::MatrixXd s_half = eg.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
                                   eg.eigenvectors().transpose();
    B = s_inv_half * B;                    // orthonormal factors
    Z.rightCols(L) = Z.rightCols(L) * s_half;  // compensating rotation

    // order by loading variance (orthogonal rotation keeps orthonormality)
    const Eigen::MatrixXd cov =
        Z.rightCols(L).transpose() * Z.rightCols(L) / static_cast<double>(T);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(cov);
    Eigen::MatrixXd u(L, L);
    for (int l = 0; l < L; ++l) u.col(l) = ec.eigenvectors().col(L - 1 - l);
    B = u.transpose() * B;
    Z.rightCols(L) = Z.rightCols(L) * u;

    // positive grid mean fixes the sign of each factor
    const Eigen::RowVectorXd psi_mean = detail::grid_mean_psi(basis);
    for (int l = 0; l < L; ++l) {
      if (psi_mean.dot(B.row(l)) < 0.0) {
        B.row(l) = -B.row(l);
        Z.col(1 + l) = -Z.col(1 + l);
      }
    }
    A.bottomRows(L) = B;
  }

  DsfmModel model;
  model.basis = basis;
  model.L = L;
  model.A = std::move(A);
  model.Z = std::move(Z);
  model.report = std::move(report);
  return model;
}

/// Factor surface m_l on a rectangular grid.
inline Eigen::MatrixXd factor_surface(const DsfmModel& model, int l,
                                      const std::vector<double>& grid_m,
                                      const std::vector<double>& grid_t) {
  if (l < 0 || l > model.L) throw std::invalid_argument("factor_surface: l out of range");
  Eigen::MatrixXd out(grid_m.size(), grid_t.size());
  Eigen::RowVectorXd row(model.basis.dim());
  for (std::size_t i = 0; i < grid_m.size(); ++i)
    for (std::size_t j = 0; j < grid_t.size(); ++j) {
      tensor_row(model.basis, grid_m[i], grid_t[j], row);
      out(i, j) = row.dot(model.A.row(l));
    }
  return out;
}

/// Dynamic surface m_0 + sum_l z_l m_l on a rectangular grid.
inline Eigen::MatrixXd surface_at(const DsfmModel& model, const Eigen::VectorXd& z_row,
                                  const std::vector<double>& grid_m,
                                  const std::vector<double>& grid_t) {
  if (z_row.size() != model.L + 1) throw std::invalid_argument("surface_at: z size mismatch");
  if (z_row(0) != 1.0) throw std::invalid_argument("surface_at: z_row[0] must be 1");
  const Eigen::VectorXd coeff = model.A.transpose() * z_row;  // K
  Eigen::MatrixXd out(grid_m.size(), grid_t.size());
  Eigen::RowVectorXd row(model.basis.dim());
  for (std::size_t i = 0; i < grid_m.size(); ++i)
    for (std::size_t j = 0; j < grid_t.size(); ++j) {
      tensor_row(model.basis, grid_m[i], grid_t[j], row);
      out(i, j) = row.dot(coeff);
    }
  return out;
}

/// Model prediction at a single coordinate for day-row z.
inline double predict_at(const DsfmModel& model, const Eigen::VectorXd& z_row, double x_m,
                         double x_t) {
  Eigen::RowVectorXd row(model.basis.dim());
  tensor_row(model.basis, x_m, x_t, row);
  return row.dot(model.A.transpose() * z_row);
}

inline double explained_variance(const DsfmModel& model, const std::vector<DayPanel>& panels) {
  if (panels.empty()) throw std::invalid_argument("explained_variance: no panels");
  double sum_y = 0.0;
  std::size_t n = 0;
  for (const auto& p : panels)
    for (const auto& pt : p.points) {
      sum_y += pt.y;
      ++n;
    }
  const double ybar = sum_y / static_cast<double>(n);
  double num = 0.0, den = 0.0;
  Eigen::RowVectorXd row(model.basis.dim());
  for (std::size_t t = 0; t < panels.size(); ++t) {
    const Eigen::VectorXd coeff = model.A.transpose() * model.Z.row(t).transpose();
    for (const auto& pt : panels[t].points) {
      tensor_row(model.basis, pt.x_m, pt.x_t, row);
      const double fit = row.dot(coeff);
      num += (pt.y - fit) * (pt.y - fit);
      den += (pt.y - ybar) * (pt.y - ybar);
    }
  }
  if (den == 0.0) throw std::runtime_error("explained_variance: zero total variance");
  return 1.0 - num / den;
}

inline double rmse(const DsfmModel& model, const std::vector<DayPanel>& panels) {
  double num = 0.0;
  std::size_t n = 0;
  Eigen::RowVectorXd row(model.basis.dim());
  for (std::size_t t = 0; t < panels.size(); ++t) {
    const Eigen::VectorXd coeff = model.A.transpose() * model.Z.row(t).transpose();
    for (const auto& pt : panels[t].points) {
      tensor_row(model.basis, pt.x_m, pt.x_t, row);
      num += (pt.y - row.dot(coeff)) * (pt.y - row.dot(coeff));
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("rmse: no observations");
  return std::sqrt(num / static_cast<double>(n));
}

/// One-step-ahead prediction error against the next day's panel.
inline double rmspe(const DsfmModel& model, const Eigen::VectorXd& z_forecast,
                    const DayPanel& panel_next) {
  if (panel_next.points.empty()) throw std::invalid_argument("rmspe: empty next-day panel");
  if (z_forecast.size() != model.L + 1) throw std::invalid_argument("rmspe: z size mismatch");
  double num = 0.0;
  Eigen::RowVectorXd row(model.basis.dim());
  const Eigen::VectorXd coeff = model.A.transpose() * z_forecast;
  for (const auto& pt : panel_next.points) {
    tensor_row(model.basis, pt.x_m, pt.x_t, row);
    num += (pt.y - row.dot(coeff)) * (pt.y - row.dot(coeff));
  }
  return std::sqrt(num / static_cast<double>(panel_next.points.size()));
}

}  // namespace letflab::dsfm
