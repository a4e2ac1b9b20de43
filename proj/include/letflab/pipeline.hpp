#pragma once

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "letflab/condvar/analytic.hpp"
#include "letflab/condvar/condvar.hpp"
#include "letflab/config.hpp"
#include "letflab/heston/calibrate.hpp"
#include "letflab/market_data.hpp"
#include "letflab/moneyness.hpp"
#include "letflab/msmooth/bands.hpp"
#include "letflab/resample.hpp"
#include "letflab/serialize.hpp"
#include "letflab/strategy.hpp"
#include "letflab/version.hpp"

namespace letflab::pipeline {

inline int env_threads() {
  if (const char* env = std::getenv("LETF_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 0;  // hardware default
}

inline std::string run_header(const std::string& subcommand, const std::string& config_hash,
                              std::uint64_t seed) {
  return std::string("letf_lab ") + kVersion + " " + subcommand + " config=" + config_hash +
         " seed=" + std::to_string(seed);
}

/// Calibration-backed conditional-variance source: at each rolling step the
/// Heston parameters are refit to the decision day's source chain, a fresh
/// Monte-Carlo curve is binned, and the result is cached by date.
class HestonMcCondVarSource final : public strategy::CondVarSource {
 public:
  HestonMcCondVarSource(heston::CarryTerms carry, double base_ttm, int n_paths, int bins,
                        std::uint64_t seed)
      : carry_(carry), base_ttm_(base_ttm), n_paths_(n_paths), bins_(bins), seed_(seed) {}

  void begin_step(const Date& date, const std::vector<OptionQuote>& source_quotes)
      const override {
    if (cache_.count(date.serial())) {
      current_ = cache_.at(date.serial());
      return;
    }
    heston::HestonParams init{2.0, 0.04, 0.5, 0.04, -0.5};
    heston::CalibrationReport rep;
    try {
      rep = heston::calibrate(source_quotes, carry_, init, 80);
    } catch (const heston::CalibrationError& e) {
      rep = e.best;  // best-so-far parameters still define a usable curve
    }
    const double s0 = source_quotes.front().underlying;
    const int steps = std::max(8, static_cast<int>(std::lround(252.0 * base_ttm_)));
    const auto paths = heston::simulate_euler(rep.params, carry_, s0, base_ttm_, steps, n_paths_,
                                              RandomStream::mix(seed_ ^ RandomStream::hash_tag(
                                                                            date.iso())),
                                              env_threads());
    current_ = condvar::mc_conditional_iv(paths, s0, default_grid(s0), base_ttm_);
    cache_[date.serial()] = current_;
  }

  moneyness::ScalingContext context(const FundSpec& source, const FundSpec& target, double r,
                                    double ttm) const override {
    if (current_.lm_grid.empty())
      throw std::runtime_error("heston condvar source: begin_step was never called");
    strategy::CurveSource curve(current_);
    return curve.context(source, target, r, ttm);
  }

  std::vector<double> default_grid(double s0) const {
    std::vector<double> grid(bins_);
    for (int i = 0; i < bins_; ++i) {
      const double star = s0 * (0.7 + 0.6 * static_cast<double>(i) / (bins_ - 1));
      grid[i] = std::log(star / s0);
    }
    return grid;
  }

 private:
  heston::CarryTerms carry_;
  double base_ttm_;
  int n_paths_;
  int bins_;
  std::uint64_t seed_;
  mutable condvar::CondVarCurve current_;
  mutable std::map<long, condvar::CondVarCurve> cache_;
};

// ---------------------------------------------------------------------------
// demo fixtures: a two-fund synthetic market driven by one Heston variance
// path; source options priced under the index dynamics, target options under
// the beta-scaled dynamics, both as constant-maturity chains.
// ---------------------------------------------------------------------------

struct DemoWorld {
  std::vector<FundSpec> funds;
  std::vector<OptionQuote> quotes;
  heston::HestonParams truth{2.0, 0.04, 0.35, 0.045, -0.6};
  double r = 0.01;
};

inline Date demo_date(int n) {
  Date out = Date::parse("2015-01-05");
  for (int i = 0; i < n; ++i) {
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

inline DemoWorld generate_demo_world(std::uint64_t seed, int n_days = 45) {
  DemoWorld world;
  world.funds = {{"SPY1", 1.0, 0.0009, 0.0}, {"LEV2", 2.0, 0.0090, 0.0}};
  const auto& p = world.truth;
  const double beta = 2.0;
  heston::HestonParams lev{p.kappa, beta * beta * p.theta, beta * p.sigma,
                           beta * beta * p.v0, p.rho};

  RandomStream rng = RandomStream::derive(seed, "demo.market", 0);
  double s = 100.0, lvl = 50.0, v = p.v0;
  const double dt = 1.0 / 252.0;
  for (int day = 0; day < n_days; ++day) {
    const Date date = demo_date(day);

    heston::HestonParams day_p = p;
    day_p.v0 = std::max(v, 1e-4);
    heston::HestonParams day_lev = lev;
    day_lev.v0 = beta * beta * day_p.v0;

    const auto push = [&](const std::string& ticker, const heston::HestonParams& dyn,
                          const heston::CarryTerms& carry, double level, double strike,
                          double ttm) {
      OptionQuote q;
      q.obs_date = date;
      // constant-maturity synthetic chains: a distinct expiry label per ttm
      q.expiry_date = ttm < 0.5 ? Date::parse("2016-06-30")
                                : (ttm < 0.75 ? Date::parse("2016-12-30")
                                              : Date::parse("2017-06-30"));
      q.ticker = ticker;
      q.strike = strike;
      q.ttm = ttm;
      q.underlying = level;
      q.mid_price = heston::price_call(dyn, carry, level, strike, ttm);
      q.implied_vol = heston::implied_vol_from_price(q.mid_price, level, strike, ttm, carry);
      world.quotes.push_back(std::move(q));
    };

    const heston::CarryTerms carry_src{world.r, world.funds[0].c_star()};
    const heston::CarryTerms carry_tgt{world.r, world.funds[1].c_star()};
    // fixed listed strikes anchored at the day-0 levels, like a real chain
    for (double ttm : {0.35, 0.6, 0.85})
      for (int k = 0; k < 12; ++k)
        push("SPY1", day_p, carry_src, s, 100.0 * std::exp(-0.30 + 0.48 * k / 11.0), ttm);
    for (int k = 0; k < 8; ++k)
      push("LEV2", day_lev, carry_tgt, lvl, 50.0 * std::exp(-0.45 + 0.72 * k / 7.0), 0.6);

    // one Euler day for the index; the levered fund compounds 2x daily returns
    double z1, z2;
    rng.next_normal_pair(z1, z2);
    const double vp = std::max(v, 0.0);
    const double s_next = s * std::exp((world.r - 0.5 * vp) * dt + std::sqrt(vp * dt) * z1);
    v += p.kappa * (p.theta - vp) * dt +
         p.sigma * std::sqrt(vp * dt) * (p.rho * z1 + std::sqrt(1 - p.rho * p.rho) * z2);
    lvl *= 1.0 + beta * (s_next / s - 1.0);
    s = s_next;
  }
  return world;
}

inline void write_demo_fixtures(const std::string& dir, std::uint64_t seed,
                                const DemoWorld& world, const std::string& header) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    csv::Writer w(dir + "/demo_funds.csv");
    w.comment(header);
    w.row({"ticker", "beta", "expense_ratio", "dividend_yield"});
    for (const auto& f : world.funds)
      w.row({f.ticker, csv::num(f.beta), csv::num(f.expense_ratio), csv::num(f.dividend_yield)});
  }
  write_quotes(dir + "/demo_quotes.csv", world.quotes, {header});
  (void)seed;
}

/// The full pipeline on the bundled synthetic fixtures, every stage seeded
/// from the single demo seed. Writes all outputs under `dir`.
inline int run_demo(const std::string& dir, std::uint64_t seed, std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto demo_cfg =
      RunConfig::parse_text("seed = " + std::to_string(seed) + "\nstrategy.window = 30\n" +
                            "dsfm.L = 2\nstrategy.tau_star = 0.6\nrobustness.iters = 50\n" +
                            "robustness.block = 5\n");
  const std::string hash = demo_cfg.hash_hex();
  const auto header = [&](const std::string& stage) {
    return run_header("demo/" + stage, hash, seed);
  };

  log << "[demo] generating fixtures\n";
  const DemoWorld world = generate_demo_world(seed);
  write_demo_fixtures(dir, seed, world, header("fixtures"));
  const auto funds = load_funds(dir + "/demo_funds.csv");
  auto quotes = load_quotes(dir + "/demo_quotes.csv", funds);
  const FundSpec src = find_fund(funds, "SPY1");
  const FundSpec tgt = find_fund(funds, "LEV2");
  const heston::CarryTerms carry{world.r, src.c_star()};

  log << "[demo] calibrating on the last day\n";
  Date last_date = quotes.front().obs_date;
  for (const auto& q : quotes) last_date = std::max(last_date, q.obs_date);
  std::vector<OptionQuote> last_chain;
  for (const auto& q : quotes)
    if (q.ticker == src.ticker && q.obs_date == last_date) last_chain.push_back(q);
  const auto calib = heston::calibrate(last_chain, carry, {2.5, 0.05, 0.5, 0.05, -0.5});
  io::write_json_file(dir + "/calibration.json", header("calibrate"), io::to_json(calib));

  log << "[demo] conditional variance curve\n";
  const double ttm_star = 0.6;
  const double s0 = last_chain.front().underlying;
  const auto paths = heston::simulate_euler(
      calib.params, carry, s0, ttm_star, static_cast<int>(std::lround(252 * ttm_star)), 50000,
      RandomStream::mix(seed ^ RandomStream::hash_tag("demo.condvar")), env_threads());
  std::vector<double> grid(41);
  for (int i = 0; i < 41; ++i) grid[i] = std::log(0.72 + 0.56 * i / 40.0);
  auto curve = condvar::mc_conditional_iv(paths, s0, grid, ttm_star);
  curve = condvar::smooth_curve(curve, 2);
  const auto analytic =
      condvar::analytic_conditional_iv_detail(0.0, calib.params, carry, s0, ttm_star);
  const double mc_atm = curve.interpolate(0.0);
  condvar::write_curve(dir + "/condvar.csv", curve,
                       {header("condvar"),
                        "analytic_atm=" + csv::num(analytic.value) +
                            " mc_atm=" + csv::num(mc_atm) +
                            " rel_diff=" + csv::num(std::fabs(analytic.value - mc_atm) /
                                                    std::max(mc_atm, 1e-12))});

  log << "[demo] moneyness scaling of the last-day slice\n";
  {
    moneyness::ScalingContext ctx;
    ctx.source = src;
    ctx.target = tgt;
    ctx.r = world.r;
    ctx.ttm = ttm_star;
    ctx.curve = curve;
    std::vector<OptionQuote> slice;
    for (const auto& q : last_chain)
      if (std::fabs(q.ttm - ttm_star) <= 1.0 / 365.0) slice.push_back(q);
    const auto scaled = moneyness::scale_quote_set(slice, ctx);
    csv::Writer w(dir + "/scaled.csv");
    w.comment(header("scale"));
    w.row({"scaled_lm", "implied_vol", "extrapolated"});
    for (const auto& sq : scaled)
      w.row({csv::num(sq.scaled_lm), csv::num(sq.implied_vol), sq.extrapolated ? "1" : "0"});
  }

  log << "[demo] bootstrap uniform band on the tau* slice\n";
  {
    std::vector<double> x, y;
    for (const auto& q : quotes)
      if (q.ticker == src.ticker && std::fabs(q.ttm - ttm_star) <= 1.0 / 365.0) {
        x.push_back(log_moneyness(q));
        y.push_back(q.implied_vol);
      }
    msmooth::SmootherConfig cfg;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    for (int i = 0; i < 41; ++i) cfg.eval_grid.push_back(*lo + (*hi - *lo) * i / 40.0);
    cfg.h = msmooth::cv_bandwidth(x, y, cfg, {0.04, 0.06, 0.09, 0.14});
    const double g = cfg.h * std::pow(static_cast<double>(x.size()), 1.0 / 5.0 - 1.0 / 9.0);
    const auto band = msmooth::uniform_band(x, y, cfg, g, 200, 0.05,
                                            RandomStream::mix(seed ^ RandomStream::hash_tag(
                                                                         "demo.bands")));
    csv::Writer w(dir + "/bands.csv");
    w.comment(header("bands"));
    w.comment("h=" + csv::num(cfg.h) + " g=" + csv::num(g) + " d_star=" + csv::num(band.d_star));
    w.row({"x", "fit", "lower", "upper"});
    for (std::size_t j = 0; j < band.grid.size(); ++j)
      w.row({csv::num(band.grid[j]), csv::num(band.fit[j]), csv::num(band.lower[j]),
             csv::num(band.upper[j])});
  }

  log << "[demo] backtest\n";
  strategy::StrategyConfig scfg;
  scfg.window_w = 30;
  scfg.L = 2;
  scfg.tau_star = ttm_star;
  scfg.r = world.r;
  scfg.dsfm_max_iter = 80;
  strategy::CurveSource curve_source(curve);
  strategy::BacktestInput input;
  input.quotes = quotes;
  input.source_fund = src;
  input.target_fund = tgt;
  input.condvar = &curve_source;
  const auto ledger = strategy::run_backtest(input, scfg);
  strategy::write_ledger(dir + "/ledger.csv", ledger, {header("backtest")});
  io::write_json_file(
      dir + "/summary.json", header("backtest"),
      {{"periods_considered", ledger.periods_considered},
       {"periods_settled", ledger.periods_settled},
       {"hits", ledger.hits},
       {"hit_rate", ledger.hit_rate()},
       {"long_only", ledger.long_only},
       {"short_only", ledger.short_only},
       {"mixed", ledger.mixed},
       {"net_short", ledger.net_short_count},
       {"cumulative", ledger.cumulative}});

  log << "[demo] dsfm + var on the final window\n";
  {
    // panels from the last window, written out and refit via the file path
    auto days = strategy::detail::group_by_day(input);
    const std::size_t t_last = days.size() - 2;
    csv::Writer w(dir + "/panels.csv");
    w.comment(header("dsfm"));
    w.row({"t", "x_m", "x_t", "y"});
    // regenerate the window panel exactly as the strategy builds it
    std::vector<dsfm::DayPanel> panels;
    {
      const std::size_t first = t_last + 1 - scfg.window_w;
      struct P {
        std::size_t d;
        double lm, ttm, iv;
      };
      std::vector<P> pool;
      for (std::size_t sday = first; sday <= t_last; ++sday) {
        std::map<double, std::vector<const OptionQuote*>> by_ttm;
        for (const auto& q : days[sday].source) by_ttm[q.ttm].push_back(&q);
        for (const auto& [ttm, qs] : by_ttm) {
          const auto ctx = curve_source.context(src, tgt, scfg.r, ttm);
          for (const auto* q : qs)
            pool.push_back({sday - first, moneyness::scale_log_moneyness(log_moneyness(*q), ctx).value,
                            q->ttm, q->implied_vol});
        }
      }
      std::vector<double> lm_ref, ttm_ref;
      for (const auto& pp : pool) {
        lm_ref.push_back(pp.lm);
        ttm_ref.push_back(pp.ttm);
      }
      const strategy::MarginalTransform lm_map(lm_ref), ttm_map(ttm_ref);
      panels.resize(scfg.window_w);
      for (int d = 0; d < scfg.window_w; ++d) panels[d].t = d;
      for (const auto& pp : pool) {
        panels[pp.d].points.push_back({lm_map(pp.lm), ttm_map(pp.ttm), pp.iv});
        w.row({std::to_string(pp.d), csv::num(lm_map(pp.lm)), csv::num(ttm_map(pp.ttm)),
               csv::num(pp.iv)});
      }
    }
    const auto model = dsfm::fit(panels, scfg.L, scfg.basis, scfg.dsfm_tol, scfg.dsfm_max_iter);
    auto model_json = io::to_json(model);
    model_json["ev"] = dsfm::explained_variance(model, panels);
    model_json["rmse"] = dsfm::rmse(model, panels);
    io::write_json_file(dir + "/dsfm.json", header("dsfm"), model_json);

    const Eigen::MatrixXd z = model.Z.rightCols(model.L);
    const auto sel = varf::select_order(z, 3);
    const auto var_model = varf::fit_var(z, sel.p_aic);
    const auto stab = varf::is_stable(var_model);
    const auto pt = varf::portmanteau(var_model, 12);
    io::write_json_file(dir + "/var.json", header("var"),
                        io::to_json(var_model, &sel, &stab, &pt));
  }

  log << "[demo] robustness\n";
  {
    resample::BlockBootstrapConfig boot;
    boot.block_size = 5;
    boot.n_iterations = 50;
    boot.seed = RandomStream::mix(seed ^ RandomStream::hash_tag("demo.robustness"));
    const auto rob = resample::run_robustness(input, scfg, boot);
    csv::Writer w(dir + "/robustness.csv");
    w.comment(header("robustness"));
    w.row({"period", "p2.5", "median", "p97.5"});
    for (Eigen::Index t = 0; t < rob.envelope.median.size(); ++t)
      w.row({std::to_string(t), csv::num(rob.envelope.percentiles(0, t)),
             csv::num(rob.envelope.median(t)), csv::num(rob.envelope.percentiles(1, t))});
  }

  log << "[demo] done\n";
  return 0;
}

}  // namespace letflab::pipeline
