#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "letflab/black_scholes.hpp"
#include "letflab/core/rng.hpp"
#include "letflab/core/stats.hpp"
#include "letflab/strategy.hpp"

namespace letflab::resample {

struct BlockBootstrapConfig {
  int block_size = 5;
  int n_iterations = 500;
  std::uint64_t seed = 0;

  void validate(long T) const {
    if (block_size < 1 || block_size > T)
      throw std::domain_error("block bootstrap: need 1 <= b <= T");
    if (n_iterations < 1) throw std::domain_error("block bootstrap: need iterations >= 1");
  }
};

inline long candidate_blocks(long T, int b) { return T - b + 1; }

/// Overlapping block bootstrap of a multivariate series: length-b blocks of
/// consecutive rows drawn uniformly with replacement from the T-b+1
/// candidates, concatenated and truncated to T rows. Rows keep their
/// within-block order and cross-column alignment.
inline Eigen::MatrixXd block_resample(const Eigen::MatrixXd& series, int b, RandomStream& rng) {
  const long T = series.rows();
  if (b < 1 || b > T) throw std::domain_error("block_resample: need 1 <= b <= T");
  const long candidates = candidate_blocks(T, b);
  Eigen::MatrixXd out(T, series.cols());
  long filled = 0;
  while (filled < T) {
    const long start = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(candidates)));
    const long take = std::min<long>(b, T - filled);
    out.middleRows(filled, take) = series.middleRows(start, take);
    filled += take;
  }
  return out;
}

inline Eigen::MatrixXd block_resample(const Eigen::MatrixXd& series,
                                      const BlockBootstrapConfig& cfg) {
  cfg.validate(series.rows());
  RandomStream rng = RandomStream::derive(cfg.seed, "resample.block", 0);
  return block_resample(series, cfg.block_size, rng);
}

/// Resample log-price increments jointly and rebuild levels from the original
/// starting prices, so every bootstrap world begins where the data began.
inline Eigen::MatrixXd resample_price_levels(const Eigen::MatrixXd& prices, int b,
                                             RandomStream& rng) {
  const long T = prices.rows();
  if (T < 2) throw std::invalid_argument("resample_price_levels: need at least 2 rows");
  if ((prices.array() <= 0.0).any())
    throw std::domain_error("resample_price_levels: prices must be positive");
  Eigen::MatrixXd incr(T - 1, prices.cols());
  for (long t = 0; t + 1 < T; ++t)
    incr.row(t) = (prices.row(t + 1).array().log() - prices.row(t).array().log()).matrix();
  const Eigen::MatrixXd incr_star = block_resample(incr, std::min<long>(b, T - 1), rng);
  Eigen::MatrixXd out(T, prices.cols());
  out.row(0) = prices.row(0);
  for (long t = 1; t < T; ++t)
    out.row(t) = (out.row(t - 1).array() * incr_star.row(t - 1).array().exp()).matrix();
  return out;
}

struct Envelope {
  std::vector<double> probs;
  Eigen::MatrixXd percentiles;  // probs.size() x T
  Eigen::VectorXd median;       // T
};

/// Pointwise empirical percentiles of per-iteration cumulative performance.
inline Envelope strategy_envelope(const Eigen::MatrixXd& per_iteration_cumulative,
                                  const std::vector<double>& probs) {
  const long n_iter = per_iteration_cumulative.rows();
  const long T = per_iteration_cumulative.cols();
  if (n_iter < 1 || T < 1) throw std::invalid_argument("strategy_envelope: empty input");
  for (double p : probs)
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("strategy_envelope: probs in (0,1)");
  if (n_iter < 40)
    throw std::invalid_argument("strategy_envelope: need at least 40 iterations for 2.5% tails");

  Envelope env;
  env.probs = probs;
  env.percentiles.resize(probs.size(), T);
  env.median.resize(T);
  std::vector<double> col(n_iter);
  for (long t = 0; t < T; ++t) {
    for (long i = 0; i < n_iter; ++i) col[i] = per_iteration_cumulative(i, t);
    for (std::size_t pi = 0; pi < probs.size(); ++pi)
      env.percentiles(pi, t) = percentile(col, probs[pi]);
    env.median(t) = percentile(col, 0.5);
  }
  return env;
}

/// Re-run the strategy on block-bootstrapped underlying prices. Each world
/// keeps every day's smile fixed in moneyness coordinates: strikes re-anchor
/// to the resampled level, IVs carry over, mids reprice under Black-Scholes.
struct RobustnessResult {
  Eigen::MatrixXd cumulative;  // n_iterations x periods
  Envelope envelope;
};

inline RobustnessResult run_robustness(const strategy::BacktestInput& base,
                                       const strategy::StrategyConfig& cfg,
                                       const BlockBootstrapConfig& boot,
                                       const std::vector<double>& probs = {0.025, 0.975}) {
  cfg.validate();
  auto days = strategy::detail::group_by_day(base);
  const long D = static_cast<long>(days.size());
  boot.validate(D);

  // daily closing levels of the two funds
  Eigen::MatrixXd prices(D, 2);
  for (long d = 0; d < D; ++d) {
    if (days[d].source.empty() || days[d].target.empty())
      throw std::invalid_argument("run_robustness: every day needs quotes for both funds");
    prices(d, 0) = days[d].source.front().underlying;
    prices(d, 1) = days[d].target.front().underlying;
  }

  const long periods = D - cfg.window_w;
  if (periods < 1) throw std::invalid_argument("run_robustness: not enough days");

  RobustnessResult res;
  res.cumulative.resize(boot.n_iterations, periods);
  for (int it = 0; it < boot.n_iterations; ++it) {
    RandomStream rng =
        RandomStream::derive(boot.seed, "resample.robustness", static_cast<std::uint64_t>(it));
    const Eigen::MatrixXd levels = resample_price_levels(prices, boot.block_size, rng);

    strategy::BacktestInput world = base;
    world.quotes.clear();
    for (long d = 0; d < D; ++d) {
      const auto rebuild = [&](const OptionQuote& q, double level) {
        OptionQuote w = q;
        const double lm = log_moneyness(q);
        w.underlying = level;
        w.strike = level * std::exp(lm);
        w.mid_price = bs::call_price(w.underlying, w.strike, w.ttm, cfg.r, 0.0, w.implied_vol);
        return w;
      };
      for (const auto& q : days[d].source) world.quotes.push_back(rebuild(q, levels(d, 0)));
      for (const auto& q : days[d].target) world.quotes.push_back(rebuild(q, levels(d, 1)));
    }

    const auto ledger = strategy::run_backtest(world, cfg);
    double acc = 0.0;
    long col = 0;
    for (const auto& e : ledger.entries) {
      if (col >= periods) break;
      if (e.settled) acc = e.pnl.cumulative;
      res.cumulative(it, col++) = acc;
    }
    for (; col < periods; ++col) res.cumulative(it, col) = acc;
  }
  res.envelope = strategy_envelope(res.cumulative, probs);
  return res;
}

}  // namespace letflab::resample
