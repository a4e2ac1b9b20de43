#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "letflab/condvar/condvar.hpp"
#include "letflab/market_data.hpp"

namespace letflab::moneyness {

/// Everything the coordinate change between leverage ratios needs: the two
/// funds, the carry inputs, and the conditional integrated-variance source
/// (a tabulated curve, or a flat variance rate for the constant-vol case).
struct ScalingContext {
  FundSpec source;  // the fund whose log-moneyness is given (beta_2)
  FundSpec target;  // the fund whose coordinate is produced (beta_1)
  double r = 0.0;
  double ttm = 0.0;
  std::optional<condvar::CondVarCurve> curve;  // E[int sigma^2 | LM^(1)]
  std::optional<double> constant_variance;     // variance rate; E = rate * ttm

  void validate() const {
    if (source.beta == 0.0 || target.beta == 0.0)
      throw std::domain_error("scaling: leverage ratios must be nonzero");
    if (!(ttm > 0.0)) throw std::domain_error("scaling: ttm must be > 0");
    if (!curve && !constant_variance)
      throw std::domain_error("scaling: no conditional-variance source");
    if (curve) {
      curve->validate();
      if (std::fabs(curve->ttm - ttm) > 1.0 / 365.0)
        throw std::domain_error("scaling: condvar curve ttm does not match context ttm");
    }
  }

  /// Flat integrated-variance surrogate used to invert the affine skeleton.
  double surrogate_integrated_variance() const {
    if (constant_variance) return *constant_variance * ttm;
    double sum = 0.0;
    long n = 0;
    for (std::size_t i = 0; i < curve->values.size(); ++i)
      if (!curve->empty_bin(i)) {
        sum += curve->values[i] * static_cast<double>(curve->bin_counts[i]);
        n += curve->bin_counts[i];
      }
    if (n == 0) throw std::runtime_error("scaling: condvar curve has no populated bins");
    return sum / static_cast<double>(n);
  }
};

struct ScaledLm {
  double value = 0.0;
  bool extrapolated = false;
};

namespace detail {

/// LM^(beta) as an affine map of LM^(1) given an already-integrated variance.
inline double unlevered_to_levered(double lm1, double beta, double cstar, double r, double ttm,
                                   double integrated_var) {
  return beta * lm1 - (r * (beta - 1.0) + cstar) * ttm -
         0.5 * beta * (beta - 1.0) * integrated_var;
}

}  // namespace detail

/// The coordinate change between leverage ratios. The conditional-variance
/// term is conditioned on the unlevered coordinate LM^(1); when the source
/// fund is itself levered, LM^(1) is recovered by inverting the affine
/// skeleton with a flat-variance surrogate before the curve lookup.
inline ScaledLm scale_log_moneyness(double lm_source, const ScalingContext& ctx) {
  ctx.validate();
  const double b1 = ctx.target.beta;
  const double b2 = ctx.source.beta;
  const double c1 = ctx.target.c_star();
  const double c2 = ctx.source.c_star();

  double lm1 = lm_source;
  if (b2 != 1.0) {
    const double flat = ctx.surrogate_integrated_variance();
    lm1 = (lm_source + (ctx.r * (b2 - 1.0) + c2) * ctx.ttm + 0.5 * b2 * (b2 - 1.0) * flat) / b2;
  }

  ScaledLm out;
  double cond_var;
  if (ctx.curve) {
    cond_var = ctx.curve->interpolate(lm1, &out.extrapolated);
  } else {
    cond_var = *ctx.constant_variance * ctx.ttm;
  }

  out.value = (b1 / b2) * lm_source +
              (((b1 / b2) * (b2 - 1.0) - (b1 - 1.0)) * ctx.r + (b1 / b2) * c2 - c1) * ctx.ttm +
              0.5 * (b1 * (b2 - 1.0) - b1 * (b1 - 1.0)) * cond_var;
  return out;
}

struct ScaledQuote {
  double scaled_lm = 0.0;
  double implied_vol = 0.0;
  bool extrapolated = false;
};

/// Apply the coordinate change to a maturity slice of quotes. Scaling moves
/// only the moneyness coordinate; implied vols pass through untouched.
inline std::vector<ScaledQuote> scale_quote_set(const std::vector<OptionQuote>& quotes,
                                                const ScalingContext& ctx) {
  ctx.validate();
  if (quotes.empty()) return {};
  const double t0 = quotes.front().ttm;
  for (const auto& q : quotes)
    if (std::fabs(q.ttm - t0) > 1.0 / 365.0)
      throw std::invalid_argument("scale_quote_set: quotes span more than one maturity");

  std::vector<ScaledQuote> out;
  out.reserve(quotes.size());
  for (const auto& q : quotes) {
    const auto s = scale_log_moneyness(log_moneyness(q), ctx);
    out.push_back({s.value, q.implied_vol, s.extrapolated});
  }
  return out;
}

}  // namespace letflab::moneyness
