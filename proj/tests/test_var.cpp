#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "letflab/core/rng.hpp"
#include "letflab/var_forecast.hpp"

using namespace letflab;
using namespace letflab::varf;

namespace {

Eigen::MatrixXd simulate_var1(const Eigen::MatrixXd& a1, const Eigen::VectorXd& c, int T,
                              std::uint64_t seed, double ar_noise = 0.0) {
  const int L = static_cast<int>(a1.rows());
  RandomStream rng = RandomStream::derive(seed, "test.var.sim", 0);
  Eigen::MatrixXd z(T, L);
  Eigen::VectorXd state = c;
  Eigen::VectorXd u_prev = Eigen::VectorXd::Zero(L);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd u(L);
    for (int j = 0; j < L; ++j) u(j) = rng.next_normal();
    if (ar_noise != 0.0) {
      u = ar_noise * u_prev + u;
      u_prev = u;
    }
    state = c + a1 * state + u;
    z.row(t) = state.transpose();
  }
  return z;
}

}  // namespace

TEST_SUITE_BEGIN("var");

TEST_CASE("coefficients of a simulated VAR(1) are recovered within 3 SE") {
  const int L = 3, T = 2000;
  const Eigen::MatrixXd a1 = 0.5 * Eigen::MatrixXd::Identity(L, L);
  const Eigen::VectorXd c = Eigen::VectorXd::Zero(L);
  const auto z = simulate_var1(a1, c, T, 1);
  const auto m = fit_var(z, 1);

  // per-equation OLS standard errors
  const int rows = T - 1;
  Eigen::MatrixXd x(rows, 1 + L);
  for (int t = 0; t < rows; ++t) {
    x(t, 0) = 1.0;
    x.block(t, 1, 1, L) = z.row(t);
  }
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  for (int eq = 0; eq < L; ++eq) {
    const double s2 = m.residuals.col(eq).squaredNorm() / (rows - (1 + L));
    for (int j = 0; j < L; ++j) {
      const double se = std::sqrt(s2 * xtx_inv(1 + j, 1 + j));
      CHECK(std::fabs(m.coef[0](eq, j) - a1(eq, j)) < 3.0 * se);
    }
  }
}

TEST_CASE("white-noise data yields small coefficients in nearly all seeds") {
  const int L = 2, T = 300;
  int all_small = 0;
  const int n_seeds = 100;
  for (int seed = 0; seed < n_seeds; ++seed) {
    const auto z =
        simulate_var1(Eigen::MatrixXd::Zero(L, L), Eigen::VectorXd::Zero(L), T, 100 + seed);
    const auto m = fit_var(z, 1);
    const int rows = T - 1;
    Eigen::MatrixXd x(rows, 1 + L);
    for (int t = 0; t < rows; ++t) {
      x(t, 0) = 1.0;
      x.block(t, 1, 1, L) = z.row(t);
    }
    const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
    bool ok = true;
    for (int eq = 0; eq < L && ok; ++eq) {
      const double s2 = m.residuals.col(eq).squaredNorm() / (rows - (1 + L));
      for (int j = 0; j < L; ++j) {
        const double se = std::sqrt(s2 * xtx_inv(1 + j, 1 + j));
        if (std::fabs(m.coef[0](eq, j)) >= 3.0 * se) {
          ok = false;
          break;
        }
      }
    }
    all_small += ok;
  }
  CHECK(all_small >= 95);
}

TEST_CASE("constant column is a degenerate-input error") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Ones(50, 2);
  RandomStream rng = RandomStream::derive(2, "test.var.const", 0);
  for (int t = 0; t < 50; ++t) z(t, 0) = rng.next_normal();
  CHECK_THROWS_AS(fit_var(z, 1), std::invalid_argument);
}

TEST_CASE("too-short samples are rejected") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Random(8, 3);
  CHECK_THROWS_AS(fit_var(z, 2), std::invalid_argument);
}

TEST_CASE("residuals are orthogonal to the regressors") {
  const Eigen::MatrixXd a1 = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  const auto z = simulate_var1(a1, Eigen::VectorXd::Zero(2), 400, 5);
  const auto m = fit_var(z, 1);
  const int rows = 399;
  for (int j = 0; j < 2; ++j) {
    double dot0 = m.residuals.col(j).sum();
    CHECK(std::fabs(dot0) < 1e-8 * rows);
    for (int k = 0; k < 2; ++k) {
      double dot = 0.0;
      for (int t = 0; t < rows; ++t) dot += m.residuals(t, j) * z(t, k);
      CHECK(std::fabs(dot) < 1e-7 * rows);
    }
  }
}

TEST_CASE("refitting fitted values plus residuals reproduces the coefficients") {
  const Eigen::MatrixXd a1 =
      (Eigen::MatrixXd(2, 2) << 0.4, 0.1, -0.2, 0.3).finished();
  const Eigen::VectorXd c = (Eigen::VectorXd(2) << 0.5, -0.2).finished();
  const auto z = simulate_var1(a1, c, 300, 9);
  const auto m = fit_var(z, 1);
  // rebuild the targets exactly as fitted + residual and refit
  Eigen::MatrixXd z2 = z;
  for (int t = 1; t < 300; ++t) {
    const Eigen::VectorXd fit_t = m.intercept + m.coef[0] * z.row(t - 1).transpose();
    z2.row(t) = (fit_t + m.residuals.row(t - 1).transpose()).transpose();
  }
  const auto m2 = fit_var(z2, 1);
  CHECK((m2.coef[0] - m.coef[0]).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((m2.intercept - m.intercept).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("order selection: AIC picks 1 for VAR(1) data in at least 90 of 100 seeds") {
  const int L = 3, T = 150;
  const Eigen::MatrixXd a1 = 0.5 * Eigen::MatrixXd::Identity(L, L);
  int picked1 = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const auto z = simulate_var1(a1, Eigen::VectorXd::Zero(L), T, 500 + seed);
    const auto sel = select_order(z, 5);
    picked1 += (sel.p_aic == 1);
  }
  CHECK(picked1 >= 90);
}

TEST_CASE("selection table is internally consistent (argmin matches the minimum)") {
  const auto z = simulate_var1(0.6 * Eigen::MatrixXd::Identity(2, 2),
                               Eigen::VectorXd::Zero(2), 200, 77);
  const auto sel = select_order(z, 5);
  const auto check = [](const std::vector<double>& v, int p) {
    for (double val : v) CHECK(v[p - 1] <= val);
  };
  check(sel.aic, sel.p_aic);
  check(sel.hq, sel.p_hq);
  check(sel.sc, sel.p_sc);
}

TEST_CASE("p_max = 1 forces every criterion to pick 1") {
  const auto z = simulate_var1(0.5 * Eigen::MatrixXd::Identity(2, 2),
                               Eigen::VectorXd::Zero(2), 120, 3);
  const auto sel = select_order(z, 1);
  CHECK(sel.p_aic == 1);
  CHECK(sel.p_hq == 1);
  CHECK(sel.p_sc == 1);
}

TEST_CASE("stability: diagonal, unit-root, and hand-computed symmetric cases") {
  VarModel m;
  m.p = 1;
  m.dim = 2;
  m.intercept = Eigen::VectorXd::Zero(2);

  m.coef = {0.5 * Eigen::MatrixXd::Identity(2, 2)};
  auto rep = is_stable(m);
  CHECK(rep.stable);
  CHECK(rep.moduli[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.moduli[1] == doctest::Approx(0.5).epsilon(1e-12));

  m.coef = {Eigen::MatrixXd::Identity(2, 2)};
  rep = is_stable(m);
  CHECK(!rep.stable);
  CHECK(rep.moduli[0] == doctest::Approx(1.0).epsilon(1e-12));

  m.coef = {(Eigen::MatrixXd(2, 2) << 0.5, 0.4, 0.4, 0.5).finished()};
  rep = is_stable(m);
  CHECK(rep.stable);
  CHECK(rep.moduli[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(rep.moduli[1] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("forecast: intercept-only, diagonal arithmetic, and composition") {
  VarModel m;
  m.p = 1;
  m.dim = 2;
  m.intercept = (Eigen::VectorXd(2) << 0.3, -0.1).finished();
  m.coef = {Eigen::MatrixXd::Zero(2, 2)};
  Eigen::MatrixXd recent(1, 2);
  recent << 5.0, 7.0;
  CHECK((forecast(m, recent) - m.intercept).cwiseAbs().maxCoeff() < 1e-15);

  m.intercept.setZero();
  m.coef = {0.5 * Eigen::MatrixXd::Identity(2, 2)};
  recent << 2.0, -2.0;
  const Eigen::VectorXd one = forecast(m, recent);
  CHECK(one(0) == doctest::Approx(1.0));
  CHECK(one(1) == doctest::Approx(-1.0));

  // iterating twice equals applying the map twice
  Eigen::MatrixXd recent2(1, 2);
  recent2 = one.transpose();
  const Eigen::VectorXd two = forecast(m, recent2);
  CHECK(two(0) == doctest::Approx(0.5));
  CHECK(two(1) == doctest::Approx(-0.5));

  Eigen::MatrixXd wrong(2, 2);
  wrong.setZero();
  CHECK_THROWS_AS(forecast(m, wrong), std::invalid_argument);
}

TEST_CASE("portmanteau: near-nominal size on iid residuals and power against AR(1)") {
  const int L = 2, T = 400;
  const Eigen::MatrixXd a1 = 0.3 * Eigen::MatrixXd::Identity(L, L);
  int rejections = 0;
  const int n_seeds = 200;
  for (int seed = 0; seed < n_seeds; ++seed) {
    const auto z = simulate_var1(a1, Eigen::VectorXd::Zero(L), T, 900 + seed);
    const auto m = fit_var(z, 1);
    const auto pt = portmanteau(m, 12);
    rejections += (pt.p_value < 0.05);
  }
  const double rate = static_cast<double>(rejections) / n_seeds;
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.08);

  // strong residual autocorrelation must be flagged
  const auto z_bad = simulate_var1(a1, Eigen::VectorXd::Zero(L), T, 4242, 0.8);
  const auto m_bad = fit_var(z_bad, 1);
  CHECK(portmanteau(m_bad, 12).p_value < 0.01);

  CHECK_THROWS_AS(portmanteau(fit_var(simulate_var1(a1, Eigen::VectorXd::Zero(L), 100, 1), 1), 1),
                  std::invalid_argument);
}

TEST_SUITE_END();
