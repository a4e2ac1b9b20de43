#pragma once

// Synthetic two-fund option market shared by the strategy tests and the
// acceptance suite: constant underliers, constant-maturity chains with a
// fixed shared expiry, day-varying smiles driven by a smooth latent level.

#include <cmath>
#include <string>
#include <vector>

#include "letflab/black_scholes.hpp"
#include "letflab/core/rng.hpp"
#include "letflab/strategy.hpp"

namespace testsupport {

inline letflab::Date day_n(int n) {
  letflab::Date out = letflab::Date::parse("2015-01-02");
  const long target = out.serial() + n;
  while (out.serial() < target) {
    ++out.day;
    if (out.day > 28) {
      out.day = 1;
      ++out.month;
      if (out.month > 12) {
        out.month = 1;
        ++out.year;
      }
    }
  }
  return out;
}

inline letflab::OptionQuote make_quote(const letflab::Date& obs, const std::string& ticker,
                                       double strike, double ttm, double iv, double underlying,
                                       double r) {
  letflab::OptionQuote q;
  q.obs_date = obs;
  q.expiry_date = letflab::Date::parse("2017-06-30");  // shared contract identity
  q.ticker = ticker;
  q.strike = strike;
  q.ttm = ttm;
  q.implied_vol = iv;
  q.underlying = underlying;
  q.mid_price = letflab::bs::call_price(underlying, strike, ttm, r, 0.0, iv);
  return q;
}

struct StrategyWorld {
  std::vector<letflab::OptionQuote> quotes;
  letflab::strategy::StrategyConfig cfg;
  letflab::strategy::BacktestInput input;
  letflab::strategy::ConstantVarianceSource condvar{0.04};

  StrategyWorld(int n_days, std::uint64_t seed) {
    using namespace letflab;
    cfg.window_w = 30;
    cfg.L = 2;
    cfg.tau_star = 0.6;
    cfg.r = 0.0;
    cfg.var_order = 1;
    cfg.dsfm_max_iter = 60;

    RandomStream rng = RandomStream::derive(seed, "test.strategy.world", 0);
    double level = 0.25;
    for (int t = 0; t < n_days; ++t) {
      const Date date = day_n(t);
      level = 0.25 + 0.8 * (level - 0.25) + 0.004 * rng.next_normal();
      const double skew = 0.02 + 0.3 * (level - 0.25);
      // source chain: 3 maturities x 8 strikes around S = 100
      for (double ttm : {0.3, 0.6, 0.9}) {
        for (int ks = 0; ks < 8; ++ks) {
          const double lm = -0.25 + 0.4 * ks / 7.0;
          const double iv = level + 0.15 * lm * lm - skew * lm + 0.01 * (ttm - 0.6);
          quotes.push_back(make_quote(date, "IDX", 100.0 * std::exp(lm), ttm, iv, 100.0, cfg.r));
        }
      }
      // target chain at tau*: 6 strikes around L = 50
      for (int ks = 0; ks < 6; ++ks) {
        const double lm = -0.45 + 0.6 * ks / 5.0;
        const double iv = 1.3 * level + 0.1 * lm * lm - 0.5 * skew * lm;
        quotes.push_back(make_quote(date, "LEV2", 50.0 * std::exp(lm), 0.6, iv, 50.0, cfg.r));
      }
    }
    input.source_fund = {"IDX", 1.0, 0.0, 0.0};
    input.target_fund = {"LEV2", 2.0, 0.0, 0.0};
    input.condvar = &condvar;
  }

  letflab::strategy::BacktestInput with_quotes() {
    letflab::strategy::BacktestInput in = input;
    in.quotes = quotes;
    return in;
  }
};

/// Overwrite every day-(t+1) target IV with the forecast made at day t, so
/// the strategy's own prediction becomes tomorrow's market.
inline letflab::strategy::BacktestInput build_oracle_world(StrategyWorld& world) {
  using namespace letflab;
  auto in = world.with_quotes();
  auto days = strategy::detail::group_by_day(in);
  const std::size_t w = static_cast<std::size_t>(world.cfg.window_w);
  for (std::size_t t = w - 1; t + 1 < days.size(); ++t) {
    const auto step = strategy::run_step(days, t, in, world.cfg);
    if (step.skipped) continue;
    for (std::size_t si = 0; si < step.slice.size(); ++si) {
      const auto& q_today = days[t].target[step.slice[si]];
      for (auto& q_next : days[t + 1].target) {
        if (q_next.strike == q_today.strike && q_next.expiry_date == q_today.expiry_date) {
          q_next.implied_vol = step.forecast_iv[si];
          q_next.mid_price = bs::call_price(q_next.underlying, q_next.strike, q_next.ttm,
                                            world.cfg.r, 0.0, q_next.implied_vol);
        }
      }
    }
  }
  strategy::BacktestInput oracle = world.input;
  for (const auto& d : days) {
    for (const auto& q : d.source) oracle.quotes.push_back(q);
    for (const auto& q : d.target) oracle.quotes.push_back(q);
  }
  return oracle;
}

}  // namespace testsupport
