#pragma once

#include <cmath>
#include <stdexcept>

#include "letflab/core/stats.hpp"

namespace letflab::bs {

/// European call under Black-Scholes with cost-of-carry c (fund expenses act
/// like a continuous dividend yield): C = S e^{-cT} N(d1) - K e^{-rT} N(d2).
inline double call_price(double s, double k, double ttm, double r, double c, double vol) {
  if (s <= 0.0 || k <= 0.0 || ttm <= 0.0) throw std::domain_error("bs::call_price: s,k,ttm must be > 0");
  if (vol <= 0.0) {
    const double fwd = s * std::exp((r - c) * ttm);
    return std::exp(-r * ttm) * std::max(fwd - k, 0.0);
  }
  const double sq = vol * std::sqrt(ttm);
  const double d1 = (std::log(s / k) + (r - c + 0.5 * vol * vol) * ttm) / sq;
  const double d2 = d1 - sq;
  return s * std::exp(-c * ttm) * normal_cdf(d1) - k * std::exp(-r * ttm) * normal_cdf(d2);
}

inline double call_delta(double s, double k, double ttm, double r, double c, double vol) {
  if (s <= 0.0 || k <= 0.0 || ttm <= 0.0) throw std::domain_error("bs::call_delta: s,k,ttm must be > 0");
  if (vol <= 0.0) return s * std::exp((r - c) * ttm) > k ? std::exp(-c * ttm) : 0.0;
  const double sq = vol * std::sqrt(ttm);
  const double d1 = (std::log(s / k) + (r - c + 0.5 * vol * vol) * ttm) / sq;
  return std::exp(-c * ttm) * normal_cdf(d1);
}

inline double vega(double s, double k, double ttm, double r, double c, double vol) {
  const double sq = vol * std::sqrt(ttm);
  const double d1 = (std::log(s / k) + (r - c + 0.5 * vol * vol) * ttm) / sq;
  return s * std::exp(-c * ttm) * normal_pdf(d1) * std::sqrt(ttm);
}

/// Implied volatility from a call price. Newton with bisection safeguard;
/// the returned vol reprices the input within 1e-10 currency units.
inline double implied_vol(double price, double s, double k, double ttm, double r, double c) {
  const double lower = std::max(0.0, s * std::exp(-c * ttm) - k * std::exp(-r * ttm));
  const double upper = s * std::exp(-c * ttm);
  if (!(price > lower && price < upper))
    throw std::domain_error("bs::implied_vol: price outside no-arbitrage bounds");

  double lo = 0.0, hi = 5.0;
  while (call_price(s, k, ttm, r, c, hi) < price) {
    hi *= 2.0;
    if (hi > 100.0) throw std::runtime_error("bs::implied_vol: no bracketing volatility");
  }
  double vol = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double diff = call_price(s, k, ttm, r, c, vol) - price;
    if (std::fabs(diff) < 1e-12 * std::max(1.0, price)) return vol;
    if (diff > 0.0)
      hi = vol;
    else
      lo = vol;
    const double v = vega(s, k, ttm, r, c, vol);
    double next = vol - diff / std::max(v, 1e-14);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    vol = next;
  }
  return vol;
}

}  // namespace letflab::bs
