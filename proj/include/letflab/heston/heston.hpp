#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "letflab/black_scholes.hpp"
#include "letflab/core/quadrature.hpp"
#include "letflab/core/rng.hpp"

namespace letflab::heston {

struct HestonParams {
  double kappa = 1.0;  // mean-reversion rate (1/years)
  double theta = 0.04; // long-run variance
  double sigma = 0.3;  // vol-of-vol
  double v0 = 0.04;    // initial variance
  double rho = -0.5;   // Brownian correlation

  void validate() const {
    if (!(kappa > 0.0)) throw std::domain_error("heston: kappa must be > 0");
    if (!(theta > 0.0)) throw std::domain_error("heston: theta must be > 0");
    if (!(sigma > 0.0)) throw std::domain_error("heston: sigma must be > 0");
    if (!(v0 >= 0.0)) throw std::domain_error("heston: v0 must be >= 0");
    if (!(rho > -1.0 && rho < 1.0)) throw std::domain_error("heston: rho must be in (-1,1)");
  }

  bool feller_holds() const { return 2.0 * kappa * theta >= sigma * sigma; }
};

struct CarryTerms {
  double r = 0.0;  // risk-free rate
  double c = 0.0;  // expense ratio / dividend-like carry on the fund
};

struct PathSample {
  double terminal_price = 0.0;
  double integrated_variance = 0.0;  // (ttm/n_steps) * sum of step variances
  double terminal_variance = 0.0;
};

namespace detail {

inline std::complex<double> log1p_cx(std::complex<double> z) {
  if (std::abs(z) < 1e-4) {
    // series keeps precision where log(1+z) would cancel
    return z * (1.0 + z * (-0.5 + z * (1.0 / 3.0 + z * (-0.25))));
  }
  return std::log(1.0 + z);
}

}  // namespace detail

/// Characteristic function of X_T = log S_T under the risk-neutral Heston
/// model with cost of carry (r - c). Evaluated in the branch-stable form:
/// the (b - d) factor is computed as -sigma^2(i w + w^2)/(b + d), which stays
/// accurate down to sigma ~ 1e-8.
inline std::complex<double> logprice_cf(std::complex<double> omega, const HestonParams& p,
                                        const CarryTerms& carry, double s0, double ttm) {
  p.validate();
  if (!(ttm > 0.0)) throw std::domain_error("logprice_cf: ttm must be > 0");
  const std::complex<double> i(0.0, 1.0);
  const double sig2 = p.sigma * p.sigma;
  const std::complex<double> b = p.kappa - p.rho * p.sigma * i * omega;
  const std::complex<double> q = sig2 * (i * omega + omega * omega);
  const std::complex<double> d = std::sqrt(b * b + q);
  const std::complex<double> bpd = b + d;
  const std::complex<double> bmd = -q / bpd;  // b - d without cancellation
  const std::complex<double> g = bmd / bpd;
  const std::complex<double> emdt = std::exp(-d * ttm);

  const std::complex<double> log_ratio =
      detail::log1p_cx(-g * emdt) - detail::log1p_cx(-g);
  const std::complex<double> C =
      (carry.r - carry.c) * i * omega * ttm +
      (p.kappa * p.theta / sig2) * (bmd * ttm - 2.0 * log_ratio);
  const std::complex<double> D = (bmd / sig2) * (1.0 - emdt) / (1.0 - g * emdt);

  return std::exp(C + D * p.v0 + i * omega * std::log(s0));
}

/// European call by Gil-Pelaez inversion: C = e^{-rT}(F P1 - K P2).
/// Adaptive quadrature on [0, 200], doubling the cutoff until the marginal
/// tail contribution drops below 1e-12.
inline double price_call(const HestonParams& p, const CarryTerms& carry, double s0,
                         double strike, double ttm) {
  if (!(strike > 0.0) || !(ttm > 0.0))
    throw std::domain_error("price_call: strike and ttm must be > 0");
  p.validate();

  const double lnk = std::log(strike);
  const std::complex<double> i(0.0, 1.0);
  const std::complex<double> phi_mi = logprice_cf(std::complex<double>(0.0, -1.0), p, carry, s0, ttm);
  const double fwd = phi_mi.real();  // E[S_T] = s0 e^{(r-c)T}

  const auto integrand_p2 = [&](double w) {
    const auto z = std::exp(-i * w * lnk) * logprice_cf(w, p, carry, s0, ttm);
    return z.imag() / w;
  };
  const auto integrand_p1 = [&](double w) {
    const auto z = std::exp(-i * w * lnk) *
                   logprice_cf(std::complex<double>(w, -1.0), p, carry, s0, ttm) / phi_mi;
    return z.imag() / w;
  };

  const auto integrate = [](const auto& f) {
    constexpr double tol = 1e-10;
    double lo = 1e-10, hi = 200.0;
    auto r = quad::adaptive_simpson(f, lo, hi, tol);
    double total = r.value;
    double err = r.abs_error;
    bool converged = r.converged;
    for (int k = 0; k < 8; ++k) {
      const auto tail = quad::adaptive_simpson(f, hi, 2.0 * hi, tol);
      total += tail.value;
      err += tail.abs_error;
      converged = converged && tail.converged;
      hi *= 2.0;
      if (std::fabs(tail.value) < 1e-12) break;
    }
    if (!converged)
      throw std::runtime_error("price_call: quadrature did not converge (achieved abs error " +
                               std::to_string(err) + ")");
    return total;
  };

  const double inv_pi = 0.31830988618379067153776752674503;
  const double p1 = 0.5 + inv_pi * integrate(integrand_p1);
  const double p2 = 0.5 + inv_pi * integrate(integrand_p2);
  const double price = std::exp(-carry.r * ttm) * (fwd * p1 - strike * p2);

  // clip quadrature noise to the no-arbitrage interval
  const double lower = std::max(0.0, s0 * std::exp(-carry.c * ttm) - strike * std::exp(-carry.r * ttm));
  const double upper = s0 * std::exp(-carry.c * ttm);
  return std::min(std::max(price, lower), upper);
}

/// Black-Scholes implied volatility of a model or market price.
inline double implied_vol_from_price(double price, double s0, double strike, double ttm,
                                     const CarryTerms& carry) {
  return bs::implied_vol(price, s0, strike, ttm, carry.r, carry.c);
}

/// Full-truncation Euler scheme. Paths are generated in fixed blocks, each
/// with its own substream keyed by (seed, block index), so the output is
/// identical for any thread count.
inline std::vector<PathSample> simulate_euler(const HestonParams& p, const CarryTerms& carry,
                                              double s0, double ttm, int n_steps, int n_paths,
                                              std::uint64_t seed, int n_threads = 0) {
  p.validate();
  if (n_steps < 1 || n_paths < 1)
    throw std::domain_error("simulate_euler: n_steps and n_paths must be >= 1");

  constexpr int kBlock = 4096;
  const int n_blocks = (n_paths + kBlock - 1) / kBlock;
  std::vector<PathSample> out(static_cast<std::size_t>(n_paths));

  const double dt = ttm / n_steps;
  const double sqdt = std::sqrt(dt);
  const double drift = (carry.r - carry.c) * dt;
  const double rho_c = std::sqrt(1.0 - p.rho * p.rho);

  const auto run_block = [&](int blk) {
    RandomStream rng = RandomStream::derive(seed, "heston.euler", static_cast<std::uint64_t>(blk));
    const int lo = blk * kBlock;
    const int hi = std::min(lo + kBlock, n_paths);
    for (int path = lo; path < hi; ++path) {
      double x = std::log(s0);
      double v = p.v0;
      double iv_sum = 0.0;
      for (int step = 0; step < n_steps; ++step) {
        double z1, z2;
        rng.next_normal_pair(z1, z2);
        const double vp = std::max(v, 0.0);
        iv_sum += vp;
        const double sqv = std::sqrt(vp);
        x += drift - 0.5 * vp * dt + sqv * sqdt * z1;
        v += p.kappa * (p.theta - vp) * dt + p.sigma * sqv * sqdt * (p.rho * z1 + rho_c * z2);
      }
      out[path] = PathSample{std::exp(x), iv_sum * dt, std::max(v, 0.0)};
    }
  };

  int workers = n_threads > 0 ? n_threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n_blocks));
  if (workers == 1) {
    for (int blk = 0; blk < n_blocks; ++blk) run_block(blk);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (int blk = next.fetch_add(1); blk < n_blocks; blk = next.fetch_add(1)) run_block(blk);
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace letflab::heston
