#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "letflab/core/rng.hpp"
#include "letflab/msmooth/bands.hpp"
#include "letflab/msmooth/msmooth.hpp"

using namespace letflab;
using namespace letflab::msmooth;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

SmootherConfig base_cfg(double h, int grid_n = 21) {
  SmootherConfig cfg;
  cfg.h = h;
  cfg.eval_grid = linspace(0.05, 0.95, grid_n);
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("msmooth");

TEST_CASE("exactly affine data is reproduced at interior grid points") {
  const auto x = linspace(0.0, 1.0, 60);
  std::vector<double> y;
  for (double xi : x) y.push_back(2.0 - 3.0 * xi);
  auto cfg = base_cfg(0.15);
  cfg.huber_c = 1e6;  // effectively squared loss
  const auto fit = fit_llm(x, y, cfg);
  for (std::size_t j = 0; j < cfg.eval_grid.size(); ++j)
    CHECK(fit.grid_fit[j] == doctest::Approx(2.0 - 3.0 * cfg.eval_grid[j]).epsilon(1e-8));
}

TEST_CASE("constant data returns the constant everywhere") {
  const auto x = linspace(0.0, 1.0, 40);
  std::vector<double> y(x.size(), 0.7);
  auto cfg = base_cfg(0.2);
  cfg.huber_c = 0.5;
  const auto fit = fit_llm(x, y, cfg);
  for (double v : fit.grid_fit) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("a gross outlier moves the Huber fit less than the least-squares fit") {
  auto x = linspace(0.0, 1.0, 50);
  std::vector<double> y;
  for (double xi : x) y.push_back(std::sin(2.0 * 3.14159265358979 * xi));
  const std::size_t hit = 25;
  y[hit] += 10.0;  // gross outlier

  auto cfg = base_cfg(0.12);
  cfg.eval_grid = {x[hit]};
  cfg.huber_c = 0.1;
  const auto robust = fit_llm(x, y, cfg);

  auto cfg_ls = cfg;
  cfg_ls.huber_c = 1e9;  // squared-loss oracle
  const auto ls = fit_llm(x, y, cfg_ls);

  const double clean = std::sin(2.0 * 3.14159265358979 * x[hit]);
  CHECK(std::fabs(robust.grid_fit[0] - clean) < std::fabs(ls.grid_fit[0] - clean));
  CHECK(std::fabs(robust.grid_fit[0] - clean) < 0.2);
}

TEST_CASE("quartic kernel flags grid points with empty neighborhoods") {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(0.01 * i);  // all data in [0, 0.19]
    y.push_back(1.0);
  }
  SmootherConfig cfg;
  cfg.kernel = Kernel::quartic;
  cfg.h = 0.05;
  cfg.huber_c = 1.0;
  cfg.eval_grid = {0.1, 0.9};  // the second point sees no data
  const auto fit = fit_llm(x, y, cfg);
  CHECK(!fit.grid_flag[0]);
  CHECK(fit.grid_flag[1]);
  CHECK(std::isnan(fit.grid_fit[1]));
}

TEST_CASE("cv tie-break picks the smallest bandwidth on noiseless linear data") {
  const auto x = linspace(0.0, 1.0, 40);
  std::vector<double> y;
  for (double xi : x) y.push_back(1.0 + 2.0 * xi);
  auto cfg = base_cfg(0.1);
  cfg.huber_c = 1.0;
  const double h = cv_bandwidth(x, y, cfg, {0.3, 0.1, 0.2});
  CHECK(h == 0.1);
}

TEST_CASE("cv scores are finite and the returned bandwidth attains the minimum") {
  const auto x = linspace(0.0, 1.0, 80);
  std::vector<double> y;
  RandomStream rng = RandomStream::derive(99, "test.cv", 0);
  for (double xi : x)
    y.push_back(std::sin(2.0 * 3.14159265358979 * xi) + 0.1 * rng.next_normal());
  auto cfg = base_cfg(0.1);
  cfg.huber_c = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> hs = {0.05, 0.08, 0.12, 0.2, 0.4};
  const double h = cv_bandwidth(x, y, cfg, hs);
  CHECK(std::find(hs.begin(), hs.end(), h) != hs.end());
}

TEST_CASE("cv choice is within one grid step of a fine-grid oracle") {
  const auto x = linspace(0.0, 1.0, 100);
  std::vector<double> y;
  RandomStream rng = RandomStream::derive(7, "test.cvfine", 0);
  for (double xi : x)
    y.push_back(std::sin(2.0 * 3.14159265358979 * xi) + 0.1 * rng.next_normal());
  auto cfg = base_cfg(0.1);
  cfg.huber_c = 1.0;

  // oracle: exhaustive fine grid
  const auto fine = linspace(0.04, 0.4, 19);
  const double h_fine = cv_bandwidth(x, y, cfg, fine);

  const std::vector<double> coarse = {0.04, 0.08, 0.12, 0.16, 0.2, 0.24, 0.28, 0.32, 0.36, 0.4};
  const double h_coarse = cv_bandwidth(x, y, cfg, coarse);
  CHECK(std::fabs(h_coarse - h_fine) <= 0.04 + 1e-12);
}

TEST_CASE("noise-free linear data yields a degenerate band containing its fit") {
  const auto x = linspace(0.0, 1.0, 50);
  std::vector<double> y;
  for (double xi : x) y.push_back(0.3 + 0.5 * xi);
  auto cfg = base_cfg(0.12);
  cfg.huber_c = 1.0;
  const auto band = uniform_band(x, y, cfg, 0.25, 100, 0.05, 4);
  for (std::size_t j = 0; j < band.grid.size(); ++j) {
    CHECK(band.lower[j] <= band.fit[j]);
    CHECK(band.fit[j] <= band.upper[j]);
    CHECK(band.upper[j] - band.lower[j] < 1e-6);
  }
}

TEST_CASE("bands are deterministic in the seed") {
  const auto x = linspace(0.0, 1.0, 60);
  std::vector<double> y;
  RandomStream rng = RandomStream::derive(3, "test.band", 0);
  for (double xi : x)
    y.push_back(std::sin(2.0 * 3.14159265358979 * xi) + 0.1 * rng.next_normal());
  auto cfg = base_cfg(0.12);
  cfg.huber_c = std::numeric_limits<double>::quiet_NaN();
  const auto a = uniform_band(x, y, cfg, 0.25, 120, 0.05, 11);
  const auto b = uniform_band(x, y, cfg, 0.25, 120, 0.05, 11);
  REQUIRE(a.grid.size() == b.grid.size());
  CHECK(a.d_star == b.d_star);
  for (std::size_t j = 0; j < a.grid.size(); ++j) {
    CHECK(a.lower[j] == b.lower[j]);
    CHECK(a.upper[j] == b.upper[j]);
  }
}

TEST_CASE("band is symmetric and monotone in alpha") {
  const auto x = linspace(0.0, 1.0, 60);
  std::vector<double> y;
  RandomStream rng = RandomStream::derive(5, "test.band2", 0);
  for (double xi : x)
    y.push_back(std::sin(2.0 * 3.14159265358979 * xi) + 0.1 * rng.next_normal());
  auto cfg = base_cfg(0.12);
  cfg.huber_c = std::numeric_limits<double>::quiet_NaN();
  const auto b10 = uniform_band(x, y, cfg, 0.25, 150, 0.10, 9);
  const auto b01 = uniform_band(x, y, cfg, 0.25, 150, 0.01, 9);
  for (std::size_t j = 0; j < b10.grid.size(); ++j) {
    CHECK(b10.upper[j] - b10.fit[j] == doctest::Approx(b10.fit[j] - b10.lower[j]).epsilon(1e-12));
    // the 99% band contains the 90% band
    CHECK(b01.lower[j] <= b10.lower[j] + 1e-12);
    CHECK(b01.upper[j] >= b10.upper[j] - 1e-12);
  }
  CHECK(b01.d_star >= b10.d_star);
}

TEST_CASE("conditional resampling respects separated clusters") {
  // two x-clusters far apart: kernel weights across clusters are ~0, so the
  // residual pool at cluster A must come from cluster A only
  std::vector<double> x, y;
  for (int i = 0; i < 30; ++i) {
    x.push_back(0.001 * i);           // cluster A near 0
    y.push_back(1.0 + 0.001 * i);
  }
  for (int i = 0; i < 30; ++i) {
    x.push_back(10.0 + 0.001 * i);    // cluster B near 10
    y.push_back(5.0);
  }
  const double h = 0.05;
  for (int t = 0; t < 30; ++t) {
    double wa = 0.0, wb = 0.0;
    for (int u = 0; u < 30; ++u) wa += kernel_value(Kernel::gaussian, (x[t] - x[u]) / h);
    for (int u = 30; u < 60; ++u) wb += kernel_value(Kernel::gaussian, (x[t] - x[u]) / h);
    CHECK(wb / (wa + wb) < 1e-12);
  }
}

TEST_CASE("centered bootstrap residuals have kernel-weighted conditional mean zero") {
  const auto x = linspace(0.0, 1.0, 50);
  std::vector<double> y;
  RandomStream rng = RandomStream::derive(17, "test.center", 0);
  for (double xi : x) y.push_back(xi * xi + 0.05 * rng.next_normal());
  auto cfg = base_cfg(0.15);
  cfg.huber_c = 10.0;
  const auto fit = fit_llm(x, y, cfg);

  for (std::size_t t = 0; t < x.size(); ++t) {
    double sw = 0.0, sv = 0.0;
    for (std::size_t u = 0; u < x.size(); ++u) {
      const double w = kernel_value(Kernel::gaussian, (x[t] - x[u]) / cfg.h);
      sw += w;
      sv += w * fit.residuals[u];
    }
    const double mu_t = sv / sw;
    // the centered pool at position t: eps_u - mu_t; its conditional mean is 0
    double check = 0.0;
    for (std::size_t u = 0; u < x.size(); ++u) {
      const double w = kernel_value(Kernel::gaussian, (x[t] - x[u]) / cfg.h);
      check += w * (fit.residuals[u] - mu_t);
    }
    CHECK(std::fabs(check / sw) < 1e-12);
  }
}

TEST_CASE("bands_disjoint: identical bands fully overlap") {
  UniformBand a;
  a.grid = {0.0, 0.5, 1.0};
  a.fit = {1.0, 1.1, 1.2};
  a.lower = {0.9, 1.0, 1.1};
  a.upper = {1.1, 1.2, 1.3};
  const auto prof = bands_disjoint(a, a);
  CHECK(!prof.disjoint_everywhere);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(prof.overlap_length[j] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("bands_disjoint: separated bands and a half-overlap construction") {
  UniformBand a, b;
  a.grid = b.grid = {0.0, 1.0, 2.0, 3.0};
  a.fit = {1.0, 1.0, 1.0, 1.0};
  a.lower = {0.9, 0.9, 0.9, 0.9};
  a.upper = {1.1, 1.1, 1.1, 1.1};
  b.fit = a.fit;
  b.lower = {2.0, 2.0, 2.0, 2.0};
  b.upper = {2.2, 2.2, 2.2, 2.2};
  CHECK(bands_disjoint(a, b).disjoint_everywhere);

  // overlap on exactly half of the grid
  b.lower = {1.05, 1.05, 2.0, 2.0};
  b.upper = {1.25, 1.25, 2.2, 2.2};
  const auto prof = bands_disjoint(a, b);
  CHECK(!prof.disjoint_everywhere);
  CHECK(prof.overlap_length[0] == doctest::Approx(0.05));
  CHECK(prof.overlap_length[1] == doctest::Approx(0.05));
  CHECK(prof.overlap_length[2] == 0.0);
  CHECK(prof.overlap_length[3] == 0.0);

  UniformBand c = a;
  c.grid = {0.0, 1.0};
  c.fit = {1.0, 1.0};
  c.lower = {0.9, 0.9};
  c.upper = {1.1, 1.1};
  CHECK_THROWS_AS(bands_disjoint(a, c), std::invalid_argument);
}

TEST_SUITE_END();
