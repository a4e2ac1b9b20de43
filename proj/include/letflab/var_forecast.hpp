#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "letflab/core/stats.hpp"

namespace letflab::varf {

/// VAR(p) with intercept: z_t = c + A_1 z_{t-1} + ... + A_p z_{t-p} + e_t.
struct VarModel {
  int p = 1;
  int dim = 0;                        // L
  Eigen::VectorXd intercept;          // L
  std::vector<Eigen::MatrixXd> coef;  // p matrices, L x L
  Eigen::MatrixXd residuals;          // (T-p) x L
  Eigen::MatrixXd resid_cov;          // L x L, cross-moment / (T-p)
};

/// Equation-wise least squares with intercept.
inline VarModel fit_var(const Eigen::MatrixXd& z, int p) {
  const int T = static_cast<int>(z.rows());
  const int L = static_cast<int>(z.cols());
  if (p < 1) throw std::invalid_argument("fit_var: order must be >= 1");
  if (T <= L * p + p + 1)
    throw std::invalid_argument("fit_var: sample too short for the requested order");
  for (int j = 0; j < L; ++j) {
    const double mean = z.col(j).mean();
    if ((z.col(j).array() - mean).abs().maxCoeff() < 1e-14)
      throw std::invalid_argument("fit_var: column " + std::to_string(j) +
                                  " is constant (zero variance)");
  }

  const int rows = T - p;
  const int k = 1 + L * p;
  Eigen::MatrixXd x(rows, k);
  Eigen::MatrixXd y(rows, L);
  for (int t = 0; t < rows; ++t) {
    x(t, 0) = 1.0;
    for (int lag = 1; lag <= p; ++lag)
      x.block(t, 1 + (lag - 1) * L, 1, L) = z.row(p + t - lag);
    y.row(t) = z.row(p + t);
  }

  const Eigen::MatrixXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);  // k x L

  VarModel m;
  m.p = p;
  m.dim = L;
  m.intercept = beta.row(0).transpose();
  for (int lag = 1; lag <= p; ++lag)
    m.coef.push_back(beta.block(1 + (lag - 1) * L, 0, L, L).transpose());
  m.residuals = y - x * beta;
  m.resid_cov = m.residuals.transpose() * m.residuals / static_cast<double>(rows);
  return m;
}

struct OrderSelection {
  int p_aic = 1, p_hq = 1, p_sc = 1;
  std::vector<double> aic, hq, sc;  // indexed by order-1
};

/// Information criteria on the common sample (all candidates predict the
/// same rows): AIC(n) = log det Sigma(n) + 2 n L^2 / T, HQ and SC with
/// 2 log log T and log T penalties.
inline OrderSelection select_order(const Eigen::MatrixXd& z, int p_max) {
  if (p_max < 1) throw std::invalid_argument("select_order: p_max must be >= 1");
  const int T = static_cast<int>(z.rows());
  const int L = static_cast<int>(z.cols());
  const int rows = T - p_max;
  if (rows <= L * p_max + p_max + 1)
    throw std::invalid_argument("select_order: sample too short for p_max");

  OrderSelection sel;
  for (int n = 1; n <= p_max; ++n) {
    const int k = 1 + L * n;
    Eigen::MatrixXd x(rows, k);
    Eigen::MatrixXd y(rows, L);
    for (int t = 0; t < rows; ++t) {
      x(t, 0) = 1.0;
      for (int lag = 1; lag <= n; ++lag)
        x.block(t, 1 + (lag - 1) * L, 1, L) = z.row(p_max + t - lag);
      y.row(t) = z.row(p_max + t);
    }
    const Eigen::MatrixXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    const Eigen::MatrixXd resid = y - x * beta;
    const Eigen::MatrixXd sigma = resid.transpose() * resid / static_cast<double>(rows);
    const double logdet = std::log(sigma.determinant());
    const double teff = static_cast<double>(rows);
    const double nl2 = static_cast<double>(n) * L * L;
    sel.aic.push_back(logdet + 2.0 * nl2 / teff);
    sel.hq.push_back(logdet + 2.0 * std::log(std::log(teff)) * nl2 / teff);
    sel.sc.push_back(logdet + std::log(teff) * nl2 / teff);
  }
  const auto argmin1 = [](const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] < v[best]) best = static_cast<int>(i);
    return best + 1;
  };
  sel.p_aic = argmin1(sel.aic);
  sel.p_hq = argmin1(sel.hq);
  sel.p_sc = argmin1(sel.sc);
  return sel;
}

struct StabilityReport {
  bool stable = false;
  std::vector<double> moduli;  // companion eigenvalue magnitudes, descending
};

/// Companion-matrix eigenvalues: stable iff all moduli are strictly < 1.
inline StabilityReport is_stable(const VarModel& m) {
  const int L = m.dim, p = m.p;
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(L * p, L * p);
  for (int lag = 0; lag < p; ++lag) comp.block(0, lag * L, L, L) = m.coef[lag];
  if (p > 1)
    comp.block(L, 0, L * (p - 1), L * (p - 1)).setIdentity();

  Eigen::EigenSolver<Eigen::MatrixXd> eig(comp, false);
  StabilityReport rep;
  for (int i = 0; i < comp.rows(); ++i) rep.moduli.push_back(std::abs(eig.eigenvalues()(i)));
  std::sort(rep.moduli.begin(), rep.moduli.end(), std::greater<>());
  rep.stable = rep.moduli.empty() || rep.moduli.front() < 1.0;
  return rep;
}

/// One-step forecast from the last p rows (oldest first, most recent last).
inline Eigen::VectorXd forecast(const VarModel& m, const Eigen::MatrixXd& z_recent) {
  if (z_recent.rows() != m.p || z_recent.cols() != m.dim)
    throw std::invalid_argument("forecast: history must be the last p rows (p x L)");
  Eigen::VectorXd out = m.intercept;
  for (int lag = 1; lag <= m.p; ++lag)
    out += m.coef[lag - 1] * z_recent.row(m.p - lag).transpose();
  return out;
}

struct PortmanteauResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Multivariate Ljung-Box-adjusted portmanteau test on the VAR residuals:
/// Q = T^2 sum_{j<=h} (T-j)^{-1} tr(C_j' C_0^{-1} C_j C_0^{-1}),
/// dof = L^2 (h - p).
inline PortmanteauResult portmanteau(const VarModel& m, int lags = 12) {
  if (lags <= m.p) throw std::invalid_argument("portmanteau: lags must exceed the VAR order");
  const int T = static_cast<int>(m.residuals.rows());
  const int L = m.dim;
  if (lags >= T) throw std::invalid_argument("portmanteau: lags must be < residual count");

  Eigen::MatrixXd c0 = Eigen::MatrixXd::Zero(L, L);
  for (int t = 0; t < T; ++t)
    c0.noalias() += m.residuals.row(t).transpose() * m.residuals.row(t);
  c0 /= static_cast<double>(T);
  const Eigen::MatrixXd c0_inv = c0.inverse();

  double q = 0.0;
  for (int j = 1; j <= lags; ++j) {
    Eigen::MatrixXd cj = Eigen::MatrixXd::Zero(L, L);
    for (int t = j; t < T; ++t)
      cj.noalias() += m.residuals.row(t).transpose() * m.residuals.row(t - j);
    cj /= static_cast<double>(T);
    q += (cj.transpose() * c0_inv * cj * c0_inv).trace() / static_cast<double>(T - j);
  }
  PortmanteauResult res;
  res.statistic = q * static_cast<double>(T) * static_cast<double>(T);
  res.dof = L * L * (lags - m.p);
  res.p_value = chi2_sf(res.statistic, res.dof);
  return res;
}

}  // namespace letflab::varf
