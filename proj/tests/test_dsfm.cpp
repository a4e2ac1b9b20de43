#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "letflab/core/rng.hpp"
#include "letflab/dsfm/dsfm.hpp"

using namespace letflab;
using namespace letflab::dsfm;

namespace {

// Synthetic world in canonical DSFM form: orthonormal factors (grid Gram),
// centered loadings with diagonal decreasing covariance, positive means.
struct SynthWorld {
  BasisSpec basis;
  Eigen::MatrixXd A;        // (L+1) x K truth
  Eigen::MatrixXd Z;        // T x (L+1)
  std::vector<DayPanel> panels;
};

SynthWorld make_world(int T, int points_per_day, int L, double noise_sd, std::uint64_t seed) {
  SynthWorld w;
  w.basis = BasisSpec::uniform(3, 9, 3, 7);
  const int k = w.basis.dim();
  RandomStream rng = RandomStream::derive(seed, "test.dsfm.world", 0);

  Eigen::MatrixXd b(L, k);
  if (L > 0) {
    for (int l = 0; l < L; ++l)
      for (int j = 0; j < k; ++j) b(l, j) = rng.next_normal();
    const Eigen::MatrixXd gram = detail::grid_gram(w.basis);
    const Eigen::MatrixXd gamma = b * gram * b.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(gamma);
    b = eg.eigenvectors() * eg.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
        eg.eigenvectors().transpose() * b;
    const Eigen::RowVectorXd psi_mean = detail::grid_mean_psi(w.basis);
    for (int l = 0; l < L; ++l)
      if (psi_mean.dot(b.row(l)) < 0.0) b.row(l) = -b.row(l);
  }

  w.A.resize(L + 1, k);
  for (int j = 0; j < k; ++j) w.A(0, j) = 0.25 + 0.05 * std::sin(0.7 * j);
  if (L > 0) w.A.bottomRows(L) = b;

  // centered loadings with exactly diagonal covariance, variances descending
  w.Z.resize(T, L + 1);
  w.Z.col(0).setOnes();
  if (L > 0) {
    Eigen::MatrixXd z_raw(T, L);
    for (int t = 0; t < T; ++t)
      for (int l = 0; l < L; ++l) z_raw(t, l) = rng.next_normal();
    z_raw.rowwise() -= z_raw.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(z_raw.transpose() * z_raw);
    z_raw = z_raw * ec.eigenvectors();  // decorrelate columns
    for (int l = 0; l < L; ++l)
      z_raw.col(l) = z_raw.col(l).normalized() * std::sqrt(static_cast<double>(T)) *
                     (0.15 / (l + 1.0));
    w.Z.rightCols(L) = z_raw;
  }

  Eigen::RowVectorXd row(k);
  for (int t = 0; t < T; ++t) {
    DayPanel p;
    p.t = t;
    for (int j = 0; j < points_per_day; ++j) {
      DayPanel::Point pt;
      pt.x_m = rng.next_uniform();
      pt.x_t = rng.next_uniform();
      tensor_row(w.basis, pt.x_m, pt.x_t, row);
      pt.y = row.dot(w.A.transpose() * w.Z.row(t).transpose());
      if (noise_sd > 0.0) pt.y += noise_sd * rng.next_normal();
      p.points.push_back(pt);
    }
    w.panels.push_back(std::move(p));
  }
  return w;
}

std::vector<double> linspace01(int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = static_cast<double>(i) / (n - 1);
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("dsfm");

TEST_CASE("basis dimensions for the order-3 configuration: U=6, V=4, K=24") {
  const auto basis = BasisSpec::uniform(3, 9, 3, 7);
  CHECK(basis.num_m() == 6);
  CHECK(basis.num_t() == 4);
  CHECK(basis.dim() == 24);
  std::vector<std::pair<double, double>> pts = {{0.3, 0.4}};
  CHECK(tensor_design(pts, basis).cols() == 24);
}

TEST_CASE("tensor design rows sum to one on the interior") {
  const auto basis = BasisSpec::uniform(3, 9, 3, 7);
  RandomStream rng = RandomStream::derive(1, "test.pou", 0);
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({rng.next_uniform(), rng.next_uniform()});
  const auto design = tensor_design(pts, basis);
  for (int i = 0; i < design.rows(); ++i)
    CHECK(design.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("clamped corner activates exactly one tensor term") {
  const auto basis = BasisSpec::uniform(3, 9, 3, 7);
  std::vector<std::pair<double, double>> pts = {{0.0, 0.0}, {1.0, 1.0}};
  const auto design = tensor_design(pts, basis);
  for (int i = 0; i < 2; ++i) {
    int ones = 0, zeros = 0;
    for (int j = 0; j < design.cols(); ++j) {
      if (design(i, j) == doctest::Approx(1.0).epsilon(1e-14)) ++ones;
      if (std::fabs(design(i, j)) < 1e-14) ++zeros;
    }
    CHECK(ones == 1);
    CHECK(zeros == design.cols() - 1);
  }
}

TEST_CASE("points outside the knot span are rejected") {
  const auto basis = BasisSpec::uniform(3, 9, 3, 7);
  std::vector<std::pair<double, double>> pts = {{1.2, 0.5}};
  CHECK_THROWS_AS(tensor_design(pts, basis), std::domain_error);
}

TEST_CASE("noiseless synthetic L=2 panel is recovered to numerical precision") {
  const auto w = make_world(40, 60, 2, 0.0, 42);
  const auto model = fit(w.panels, 2, w.basis);
  CHECK(rmse(model, w.panels) < 1e-6);
  CHECK(explained_variance(model, w.panels) >= 0.999);
}

TEST_CASE("L = 0 reduces to the pooled least-squares fit") {
  const auto w = make_world(15, 50, 0, 0.02, 7);
  const auto model = fit(w.panels, 0, w.basis);

  // direct pooled LS oracle
  std::vector<std::pair<double, double>> pts;
  std::vector<double> ys;
  for (const auto& p : w.panels)
    for (const auto& pt : p.points) {
      pts.push_back({pt.x_m, pt.x_t});
      ys.push_back(pt.y);
    }
  const auto design = tensor_design(pts, w.basis);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), ys.size());
  Eigen::MatrixXd m = design.transpose() * design;
  m.diagonal().array() += 1e-8 * m.trace() / w.basis.dim();
  const Eigen::VectorXd pooled = m.ldlt().solve(design.transpose() * y);

  for (int j = 0; j < w.basis.dim(); ++j)
    CHECK(model.A(0, j) == doctest::Approx(pooled(j)).epsilon(1e-6));

  // and the l=0 factor surface equals the pooled surface
  const auto grid = linspace01(21);
  const auto surf = factor_surface(model, 0, grid, grid);
  Eigen::RowVectorXd row(w.basis.dim());
  for (int i = 0; i < 21; ++i)
    for (int j = 0; j < 21; ++j) {
      tensor_row(w.basis, grid[i], grid[j], row);
      CHECK(surf(i, j) == doctest::Approx(row.dot(pooled)).epsilon(1e-5));
    }
}

TEST_CASE("orthonormalization preserves fitted values and produces the canonical form") {
  const auto w = make_world(40, 60, 2, 0.03, 11);
  const auto model = fit(w.panels, 2, w.basis);

  // the report objective was computed before the transform; recomputing SSR
  // from the returned (A, Z) must give the same number
  double ssr = 0.0;
  Eigen::RowVectorXd row(w.basis.dim());
  for (std::size_t t = 0; t < w.panels.size(); ++t) {
    const Eigen::VectorXd coeff = model.A.transpose() * model.Z.row(t).transpose();
    for (const auto& pt : w.panels[t].points) {
      tensor_row(w.basis, pt.x_m, pt.x_t, row);
      const double r = pt.y - row.dot(coeff);
      ssr += r * r;
    }
  }
  CHECK(ssr == doctest::Approx(model.report.objective).epsilon(1e-10));

  // Gram of m_1..m_L is the identity
  const auto gram = detail::grid_gram(model.basis);
  const Eigen::MatrixXd b = model.A.bottomRows(model.L);
  const Eigen::MatrixXd gamma = b * gram * b.transpose();
  for (int i = 0; i < model.L; ++i)
    for (int j = 0; j < model.L; ++j)
      CHECK(gamma(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));

  // loading variances are ordered
  const auto zc = model.Z.rightCols(model.L);
  std::vector<double> var(model.L);
  for (int l = 0; l < model.L; ++l) {
    const double mean = zc.col(l).mean();
    var[l] = (zc.col(l).array() - mean).square().sum() / zc.rows();
  }
  for (int l = 1; l < model.L; ++l) CHECK(var[l - 1] >= var[l] - 1e-12);

  // Z first column is ones; factors have positive grid mean
  for (int t = 0; t < model.Z.rows(); ++t) CHECK(model.Z(t, 0) == 1.0);
  const auto psi_mean = detail::grid_mean_psi(model.basis);
  for (int l = 0; l < model.L; ++l) CHECK(psi_mean.dot(b.row(l)) > 0.0);
}

TEST_CASE("synthetic factor surfaces are recovered after sign alignment") {
  const auto w = make_world(60, 80, 2, 0.0, 23);
  const auto model = fit(w.panels, 2, w.basis, 1e-12, 2000);
  const auto grid = linspace01(31);
  for (int l = 0; l <= 2; ++l) {
    const auto got = factor_surface(model, l, grid, grid);
    Eigen::MatrixXd want(31, 31);
    Eigen::RowVectorXd row(w.basis.dim());
    for (int i = 0; i < 31; ++i)
      for (int j = 0; j < 31; ++j) {
        tensor_row(w.basis, grid[i], grid[j], row);
        want(i, j) = row.dot(w.A.row(l));
      }
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("surface_at: z-unit vector, linearity, pointwise agreement") {
  const auto w = make_world(30, 50, 2, 0.02, 3);
  const auto model = fit(w.panels, 2, w.basis);
  const auto grid = linspace01(11);

  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(3);
  z0(0) = 1.0;
  const auto s0 = surface_at(model, z0, grid, grid);
  const auto f0 = factor_surface(model, 0, grid, grid);
  CHECK((s0 - f0).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::VectorXd za = z0, zb = z0;
  za(1) = 0.4;
  za(2) = -0.2;
  zb(1) = -0.1;
  zb(2) = 0.3;
  const auto sa = surface_at(model, za, grid, grid);
  const auto sb = surface_at(model, zb, grid, grid);
  Eigen::VectorXd zsum = za + zb;
  zsum(0) = 1.0;
  const auto ssum = surface_at(model, zsum, grid, grid);
  CHECK((ssum - (sa + sb - f0)).cwiseAbs().maxCoeff() < 1e-12);

  // per-point prediction agreement at data coordinates
  const auto& panel = w.panels[5];
  const Eigen::VectorXd zrow = model.Z.row(5).transpose();
  Eigen::RowVectorXd row(w.basis.dim());
  for (const auto& pt : panel.points) {
    tensor_row(w.basis, pt.x_m, pt.x_t, row);
    const double direct = row.dot(model.A.transpose() * zrow);
    CHECK(predict_at(model, zrow, pt.x_m, pt.x_t) == doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("explained variance: perfect fit and grand-mean model") {
  const auto w = make_world(20, 40, 1, 0.0, 9);
  const auto model = fit(w.panels, 1, w.basis);
  CHECK(explained_variance(model, w.panels) == doctest::Approx(1.0).epsilon(1e-9));

  // a model that predicts the grand mean everywhere has EV = 0
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : w.panels)
    for (const auto& pt : p.points) {
      sum += pt.y;
      ++n;
    }
  DsfmModel flat;
  flat.basis = w.basis;
  flat.L = 0;
  flat.A = Eigen::MatrixXd::Constant(1, w.basis.dim(), sum / n);  // partition of unity
  flat.Z = Eigen::MatrixXd::Ones(w.panels.size(), 1);
  CHECK(explained_variance(flat, w.panels) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("rmse: zero residual and constant offset") {
  const auto w = make_world(20, 40, 1, 0.0, 13);
  const auto model = fit(w.panels, 1, w.basis);
  CHECK(rmse(model, w.panels) < 1e-8);

  auto shifted = w.panels;
  for (auto& p : shifted)
    for (auto& pt : p.points) pt.y += 0.017;
  CHECK(rmse(model, shifted) == doctest::Approx(0.017).epsilon(1e-6));
}

TEST_CASE("rmspe with the true next-day loadings on noiseless data") {
  auto w = make_world(41, 60, 2, 0.0, 29);
  const DayPanel next = w.panels.back();
  const Eigen::VectorXd z_next_true = w.Z.row(40).transpose();
  w.panels.pop_back();
  Eigen::MatrixXd z_head = w.Z.topRows(40);

  const auto model = fit(w.panels, 2, w.basis, 1e-12, 2000);
  // map the true loadings into the fitted (rotated) coordinates by regressing
  // fitted Z on true Z over the training days
  Eigen::MatrixXd x(40, 3);
  x.col(0).setOnes();
  x.rightCols(2) = z_head.rightCols(2);
  const Eigen::MatrixXd beta =
      (x.transpose() * x).ldlt().solve(x.transpose() * model.Z.rightCols(2));
  Eigen::VectorXd z_fc(3);
  z_fc(0) = 1.0;
  Eigen::RowVectorXd xrow(3);
  xrow << 1.0, z_next_true(1), z_next_true(2);
  z_fc.tail(2) = (xrow * beta).transpose();
  CHECK(rmspe(model, z_fc, next) < 1e-6);
}

TEST_CASE("warm-started larger model never explains less variance") {
  const auto w = make_world(40, 60, 3, 0.05, 31);
  const auto m1 = fit(w.panels, 1, w.basis);
  const auto m2 = fit(w.panels, 2, w.basis, 1e-7, 500, &m1);
  CHECK(explained_variance(m2, w.panels) >= explained_variance(m1, w.panels) - 1e-12);
}

TEST_CASE("objective trace is monotone nonincreasing") {
  const auto w = make_world(30, 50, 2, 0.05, 37);
  const auto model = fit(w.panels, 2, w.basis);
  const auto& trace = model.report.objective_trace;
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] <= trace[i - 1] * (1.0 + 1e-10) + 1e-12);
}

TEST_CASE("preconditions: days and observation counts") {
  const auto w = make_world(4, 10, 3, 0.0, 41);
  CHECK_THROWS_AS(fit(w.panels, 3, w.basis), std::invalid_argument);  // T < L+2
  const auto w2 = make_world(10, 5, 1, 0.0, 43);                      // 50 < 5K = 120
  CHECK_THROWS_AS(fit(w2.panels, 1, w2.basis), std::invalid_argument);
}

TEST_SUITE_END();
