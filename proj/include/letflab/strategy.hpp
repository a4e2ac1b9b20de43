#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "letflab/black_scholes.hpp"
#include "letflab/core/csv.hpp"
#include "letflab/dsfm/dsfm.hpp"
#include "letflab/market_data.hpp"
#include "letflab/moneyness.hpp"
#include "letflab/var_forecast.hpp"

namespace letflab::strategy {

/// Empirical-CDF map to [0,1] with the midrank convention for ties and
/// linear interpolation between order statistics. Values outside the
/// reference range clamp to 0/1 and set the flag.
struct MarginalTransform {
  std::vector<double> u;  // distinct reference values, ascending
  std::vector<double> q;  // plotting positions

  explicit MarginalTransform(std::vector<double> reference) {
    if (reference.empty()) throw std::invalid_argument("marginal_transform: empty reference");
    std::sort(reference.begin(), reference.end());
    const std::size_t n = reference.size();
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && reference[j + 1] == reference[i]) ++j;
      double pos = 0.0;
      for (std::size_t t = i; t <= j; ++t)
        pos += n > 1 ? static_cast<double>(t) / static_cast<double>(n - 1) : 0.5;
      u.push_back(reference[i]);
      q.push_back(pos / static_cast<double>(j - i + 1));
      i = j + 1;
    }
  }

  double operator()(double v, bool* clamped = nullptr) const {
    if (clamped) *clamped = false;
    if (v <= u.front()) {
      if (clamped) *clamped = v < u.front();
      return u.size() == 1 ? q.front() : 0.0;
    }
    if (v >= u.back()) {
      if (clamped) *clamped = v > u.back();
      return u.size() == 1 ? q.front() : 1.0;
    }
    const auto it = std::upper_bound(u.begin(), u.end(), v);
    const std::size_t k = static_cast<std::size_t>(it - u.begin());
    const double w = (v - u[k - 1]) / (u[k] - u[k - 1]);
    return q[k - 1] + w * (q[k] - q[k - 1]);
  }
};

inline std::vector<double> marginal_transform(const std::vector<double>& values,
                                              const std::vector<double>& reference) {
  const MarginalTransform map(reference);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(map(v));
  return out;
}

/// Black-Scholes call delta with the option's own market vol (no carry).
inline double bs_delta(double s, double k, double ttm, double r, double iv) {
  if (!(s > 0.0 && k > 0.0 && ttm > 0.0 && iv > 0.0))
    throw std::domain_error("bs_delta: inputs must be positive");
  return bs::call_delta(s, k, ttm, r, 0.0, iv);
}

enum class TradeClass { long_only, short_only, mixed, none };

inline const char* to_string(TradeClass c) {
  switch (c) {
    case TradeClass::long_only: return "long_only";
    case TradeClass::short_only: return "short_only";
    case TradeClass::mixed: return "mixed";
    case TradeClass::none: return "none";
  }
  return "none";
}

struct TradeLeg {
  std::string quote_id;
  std::size_t index = 0;  // position in the compared lists
  double d_value = 0.0;   // IV difference that triggered the leg
};

struct TradeDecision {
  Date date;
  std::optional<TradeLeg> long_leg;
  std::optional<TradeLeg> short_leg;
  double hedge_delta = 0.0;
  TradeClass classification = TradeClass::none;
};

/// The three-case trade rule on a maturity slice: model above market
/// everywhere -> long only; below everywhere -> short only; both -> one leg
/// each at the largest differences. Equal points contribute nothing; ties at
/// the argmax resolve to the lowest index.
inline TradeDecision decide(const std::vector<double>& iv_model_next,
                            const std::vector<double>& iv_market_now,
                            const std::vector<std::string>& quote_ids) {
  if (iv_model_next.size() != iv_market_now.size() ||
      iv_model_next.size() != quote_ids.size() || iv_model_next.empty())
    throw std::invalid_argument("decide: need equal-length nonempty lists");

  TradeDecision dec;
  double best_long = 0.0, best_short = 0.0;
  std::size_t arg_long = 0, arg_short = 0;
  bool any_long = false, any_short = false;
  for (std::size_t i = 0; i < iv_model_next.size(); ++i) {
    const double d = iv_model_next[i] - iv_market_now[i];
    if (d > 0.0 && (!any_long || d > best_long)) {
      best_long = d;
      arg_long = i;
      any_long = true;
    }
    if (d < 0.0 && (!any_short || -d > best_short)) {
      best_short = -d;
      arg_short = i;
      any_short = true;
    }
  }
  if (any_long) dec.long_leg = TradeLeg{quote_ids[arg_long], arg_long, best_long};
  if (any_short) dec.short_leg = TradeLeg{quote_ids[arg_short], arg_short, best_short};
  if (any_long && any_short)
    dec.classification = TradeClass::mixed;
  else if (any_long)
    dec.classification = TradeClass::long_only;
  else if (any_short)
    dec.classification = TradeClass::short_only;
  else
    dec.classification = TradeClass::none;
  return dec;
}

/// Portfolio accounting identity: C_long - C_short - delta * underlying,
/// absent legs contributing zero.
inline double portfolio_value(std::optional<double> c_long, std::optional<double> c_short,
                              double hedge_delta, double underlying) {
  return c_long.value_or(0.0) - c_short.value_or(0.0) - hedge_delta * underlying;
}

struct PnlRecord {
  Date date;
  double entry_value = 0.0;
  double exit_value = 0.0;
  double pnl = 0.0;
  double cumulative = 0.0;
};

/// Close the period: the hedge ratio stays frozen at its entry value.
inline PnlRecord settle(const Date& date, double entry_value, std::optional<double> exit_c_long,
                        std::optional<double> exit_c_short, double entry_hedge_delta,
                        double exit_underlying) {
  PnlRecord rec;
  rec.date = date;
  rec.entry_value = entry_value;
  rec.exit_value = portfolio_value(exit_c_long, exit_c_short, entry_hedge_delta, exit_underlying);
  rec.pnl = rec.exit_value - rec.entry_value;
  return rec;
}

/// Where the conditional integrated variance comes from during the backtest.
class CondVarSource {
 public:
  virtual ~CondVarSource() = default;
  /// Called once at the start of each rolling step with the decision day's
  /// source-fund quotes; stateful sources refresh their curve here. Uses only
  /// data dated at or before the decision day.
  virtual void begin_step(const Date&, const std::vector<OptionQuote>&) const {}
  virtual moneyness::ScalingContext context(const FundSpec& source, const FundSpec& target,
                                            double r, double ttm) const = 0;
};

class ConstantVarianceSource final : public CondVarSource {
 public:
  explicit ConstantVarianceSource(double rate) : rate_(rate) {}
  moneyness::ScalingContext context(const FundSpec& source, const FundSpec& target, double r,
                                    double ttm) const override {
    moneyness::ScalingContext ctx;
    ctx.source = source;
    ctx.target = target;
    ctx.r = r;
    ctx.ttm = ttm;
    ctx.constant_variance = rate_;
    return ctx;
  }

 private:
  double rate_;
};

/// A curve estimated at one horizon, rescaled linearly in maturity.
class CurveSource final : public CondVarSource {
 public:
  explicit CurveSource(condvar::CondVarCurve base) : base_(std::move(base)) {
    base_.validate();
  }
  moneyness::ScalingContext context(const FundSpec& source, const FundSpec& target, double r,
                                    double ttm) const override {
    moneyness::ScalingContext ctx;
    ctx.source = source;
    ctx.target = target;
    ctx.r = r;
    ctx.ttm = ttm;
    condvar::CondVarCurve scaled = base_;
    scaled.ttm = ttm;
    for (std::size_t i = 0; i < scaled.values.size(); ++i)
      if (!scaled.empty_bin(i)) scaled.values[i] *= ttm / base_.ttm;
    ctx.curve = std::move(scaled);
    return ctx;
  }

 private:
  condvar::CondVarCurve base_;
};

enum class HedgeModel { black_scholes_delta, external_delta };

struct StrategyConfig {
  int window_w = 100;
  double tau_star = 0.6;
  double tau_slice_tol = 2.0 / 365.0;
  int L = 3;
  dsfm::BasisSpec basis = dsfm::BasisSpec::uniform(3, 9, 3, 7);
  double r = 0.0;
  int var_order = 1;
  int surface_nodes = 101;  // forecast grid per axis for the bilinear lookup
  HedgeModel hedge_model = HedgeModel::black_scholes_delta;
  double dsfm_tol = 1e-7;
  int dsfm_max_iter = 200;

  void validate() const {
    if (window_w < 30) throw std::domain_error("strategy: window_w must be >= 30");
    if (!(tau_star > 0.0)) throw std::domain_error("strategy: tau_star must be > 0");
    if (L < 1) throw std::domain_error("strategy: L must be >= 1");
    basis.validate();
  }
};

struct LedgerEntry {
  Date date;
  TradeDecision decision;
  PnlRecord pnl;
  bool settled = false;
  bool hit = false;
  bool net_short = false;
  std::string skip_reason;  // empty when the period traded and settled
};

struct TradeLedger {
  std::vector<LedgerEntry> entries;
  int periods_considered = 0;
  int periods_settled = 0;
  int hits = 0;
  int long_only = 0, short_only = 0, mixed = 0;
  int net_short_count = 0;
  double cumulative = 0.0;

  double hit_rate() const {
    return periods_settled > 0 ? static_cast<double>(hits) / periods_settled : 0.0;
  }
};

struct BacktestInput {
  std::vector<OptionQuote> quotes;  // both funds, any day order
  FundSpec source_fund;             // quotes that feed the model (the unlevered fund)
  FundSpec target_fund;             // quotes that are traded
  const CondVarSource* condvar = nullptr;
  // required in external_delta mode: per-quote hedge delta
  std::function<double(const OptionQuote&)> external_delta;
};

namespace detail {

struct DayData {
  Date date;
  std::vector<OptionQuote> source;
  std::vector<OptionQuote> target;
};

inline std::vector<DayData> group_by_day(const BacktestInput& in) {
  std::map<long, DayData> days;
  for (const auto& q : in.quotes) {
    auto& d = days[q.obs_date.serial()];
    d.date = q.obs_date;
    if (q.ticker == in.source_fund.ticker)
      d.source.push_back(q);
    else if (q.ticker == in.target_fund.ticker)
      d.target.push_back(q);
  }
  std::vector<DayData> out;
  out.reserve(days.size());
  for (auto& [serial, d] : days) out.push_back(std::move(d));
  return out;
}

inline std::string quote_id(const OptionQuote& q) {
  return q.ticker + "@" + csv::num(q.strike) + "/" + q.expiry_date.iso();
}

/// Bilinear interpolation on a uniform [0,1]^2 grid.
inline double bilinear(const Eigen::MatrixXd& grid, double x, double y) {
  const int n = static_cast<int>(grid.rows());
  const int m = static_cast<int>(grid.cols());
  const double fx = std::min(std::max(x, 0.0), 1.0) * (n - 1);
  const double fy = std::min(std::max(y, 0.0), 1.0) * (m - 1);
  const int i = std::min(static_cast<int>(fx), n - 2);
  const int j = std::min(static_cast<int>(fy), m - 2);
  const double ax = fx - i, ay = fy - j;
  return grid(i, j) * (1 - ax) * (1 - ay) + grid(i + 1, j) * ax * (1 - ay) +
         grid(i, j + 1) * (1 - ax) * ay + grid(i + 1, j + 1) * ax * ay;
}

}  // namespace detail

/// One rolling step observed at the last day of the window: scale the source
/// quotes to the target coordinate, fit the DSFM on the window, forecast the
/// loadings one day ahead, and compare the forecast surface against today's
/// target-fund maturity slice.
struct StepResult {
  bool skipped = false;
  std::string reason;
  TradeDecision decision;
  std::vector<std::size_t> slice;        // indices into day-t target quotes
  std::vector<double> forecast_iv;       // model IVs for tomorrow at the slice
  std::vector<double> market_iv;         // today's market IVs at the slice
  double entry_value = 0.0;
};

inline StepResult run_step(const std::vector<detail::DayData>& days, std::size_t t_index,
                           const BacktestInput& in, const StrategyConfig& cfg) {
  StepResult res;
  const auto skip = [&](const std::string& why) {
    res.skipped = true;
    res.reason = why;
    return res;
  };

  const std::size_t w = static_cast<std::size_t>(cfg.window_w);
  const std::size_t first = t_index + 1 - w;

  in.condvar->begin_step(days[t_index].date, days[t_index].source);

  // steps 1-2: scaled coordinates for every window day, pooled references
  struct PanelPoint {
    std::size_t day;
    double scaled_lm, ttm, iv;
  };
  std::vector<PanelPoint> pool;
  for (std::size_t s = first; s <= t_index; ++s) {
    std::map<double, std::vector<const OptionQuote*>> by_ttm;
    for (const auto& q : days[s].source) by_ttm[q.ttm].push_back(&q);
    for (const auto& [ttm, qs] : by_ttm) {
      const auto ctx = in.condvar->context(in.source_fund, in.target_fund, cfg.r, ttm);
      for (const auto* q : qs) {
        const auto scaled = moneyness::scale_log_moneyness(log_moneyness(*q), ctx);
        pool.push_back({s - first, scaled.value, q->ttm, q->implied_vol});
      }
    }
  }
  if (pool.size() < static_cast<std::size_t>(5 * cfg.basis.dim()))
    return skip("window has too few source observations for the basis");

  std::vector<double> lm_ref, ttm_ref;
  lm_ref.reserve(pool.size());
  ttm_ref.reserve(pool.size());
  for (const auto& p : pool) {
    lm_ref.push_back(p.scaled_lm);
    ttm_ref.push_back(p.ttm);
  }
  const MarginalTransform lm_map(lm_ref), ttm_map(ttm_ref);

  // step 3: DSFM panels on the unit square
  std::vector<dsfm::DayPanel> panels(w);
  for (std::size_t s = 0; s < w; ++s) panels[s].t = static_cast<int>(s);
  for (const auto& p : pool)
    panels[p.day].points.push_back({lm_map(p.scaled_lm), ttm_map(p.ttm), p.iv});
  for (const auto& panel : panels)
    if (panel.points.empty()) return skip("a window day has no source quotes");

  dsfm::DsfmModel model;
  try {
    model = dsfm::fit(panels, cfg.L, cfg.basis, cfg.dsfm_tol, cfg.dsfm_max_iter);
  } catch (const std::exception& e) {
    return skip(std::string("dsfm fit failed: ") + e.what());
  }

  // step 4: VAR forecast of the loadings
  Eigen::VectorXd z_next(cfg.L + 1);
  z_next(0) = 1.0;
  try {
    const Eigen::MatrixXd z = model.Z.rightCols(cfg.L);
    const auto var_model = varf::fit_var(z, cfg.var_order);
    const Eigen::MatrixXd recent = z.bottomRows(cfg.var_order);
    z_next.tail(cfg.L) = varf::forecast(var_model, recent);
  } catch (const std::exception& e) {
    return skip(std::string("var forecast failed: ") + e.what());
  }

  // step 5: today's target-fund tau* slice mapped through the model marginals
  const auto& today = days[t_index];
  std::vector<std::size_t> slice;
  for (std::size_t i = 0; i < today.target.size(); ++i)
    if (std::fabs(today.target[i].ttm - cfg.tau_star) <= cfg.tau_slice_tol) slice.push_back(i);
  if (slice.empty()) return skip("empty tau* slice on the decision day");

  // step 6: bilinear lookup on the forecast surface grid
  std::vector<double> grid_nodes(cfg.surface_nodes);
  for (int i = 0; i < cfg.surface_nodes; ++i)
    grid_nodes[i] = static_cast<double>(i) / (cfg.surface_nodes - 1);
  const Eigen::MatrixXd surface = dsfm::surface_at(model, z_next, grid_nodes, grid_nodes);

  std::vector<double> model_iv, market_iv;
  std::vector<std::string> ids;
  for (std::size_t i : slice) {
    const auto& q = today.target[i];
    const double um = lm_map(log_moneyness(q));
    const double ut = ttm_map(q.ttm);
    model_iv.push_back(detail::bilinear(surface, um, ut));
    market_iv.push_back(q.implied_vol);
    ids.push_back(detail::quote_id(q));
  }

  // step 7: the trade rule and the hedge
  res.decision = decide(model_iv, market_iv, ids);
  res.decision.date = today.date;
  res.slice = slice;
  res.forecast_iv = std::move(model_iv);
  res.market_iv = std::move(market_iv);
  if (res.decision.classification == TradeClass::none) return res;

  const auto delta_of = [&](const OptionQuote& q) {
    if (cfg.hedge_model == HedgeModel::external_delta) {
      if (!in.external_delta)
        throw std::runtime_error("strategy: external_delta mode without a delta source");
      return in.external_delta(q);
    }
    return bs_delta(q.underlying, q.strike, q.ttm, cfg.r, q.implied_vol);
  };
  double delta_long = 0.0, delta_short = 0.0;
  std::optional<double> c_long, c_short;
  if (res.decision.long_leg) {
    const auto& q = today.target[slice[res.decision.long_leg->index]];
    delta_long = delta_of(q);
    c_long = q.mid_price;
  }
  if (res.decision.short_leg) {
    const auto& q = today.target[slice[res.decision.short_leg->index]];
    delta_short = delta_of(q);
    c_short = q.mid_price;
  }
  res.decision.hedge_delta = delta_long - delta_short;
  res.entry_value = portfolio_value(c_long, c_short, res.decision.hedge_delta,
                                    today.target[slice.front()].underlying);
  return res;
}

/// The rolling backtest: decide at every day t in [w-1, D-2] and settle at
/// t+1. Periods with no usable slice, no tradable decision, or missing exit
/// quotes are recorded as skipped.
inline TradeLedger run_backtest(const BacktestInput& in, const StrategyConfig& cfg) {
  cfg.validate();
  if (!in.condvar) throw std::invalid_argument("run_backtest: no condvar source");
  const auto days = detail::group_by_day(in);
  const std::size_t w = static_cast<std::size_t>(cfg.window_w);
  {
    std::size_t with_source = 0, with_target = 0;
    for (const auto& d : days) {
      with_source += !d.source.empty();
      with_target += !d.target.empty();
    }
    if (with_source < w + 1 || days.size() < w + 1)
      throw std::invalid_argument("run_backtest: need at least window_w + 1 days of data");
    (void)with_target;
  }

  TradeLedger ledger;
  for (std::size_t t = w - 1; t + 1 < days.size(); ++t) {
    ++ledger.periods_considered;
    LedgerEntry entry;
    entry.date = days[t].date;

    auto step = run_step(days, t, in, cfg);
    if (step.skipped) {
      entry.skip_reason = step.reason;
      ledger.entries.push_back(std::move(entry));
      continue;
    }
    entry.decision = step.decision;
    if (step.decision.classification == TradeClass::none) {
      entry.skip_reason = "no trade: model equals market on the whole slice";
      ledger.entries.push_back(std::move(entry));
      continue;
    }

    // find tomorrow's exits by contract identity
    const auto& tomorrow = days[t + 1];
    const auto find_exit = [&](const TradeLeg& leg) -> const OptionQuote* {
      const auto& q0 = days[t].target[step.slice[leg.index]];
      for (const auto& q : tomorrow.target)
        if (q.strike == q0.strike && q.expiry_date == q0.expiry_date) return &q;
      return nullptr;
    };

    const OptionQuote* exit_long = nullptr;
    const OptionQuote* exit_short = nullptr;
    if (step.decision.long_leg) {
      exit_long = find_exit(*step.decision.long_leg);
      if (!exit_long) {
        entry.skip_reason = "missing exit quote for the long leg";
        ledger.entries.push_back(std::move(entry));
        continue;
      }
    }
    if (step.decision.short_leg) {
      exit_short = find_exit(*step.decision.short_leg);
      if (!exit_short) {
        entry.skip_reason = "missing exit quote for the short leg";
        ledger.entries.push_back(std::move(entry));
        continue;
      }
    }
    const double exit_underlying =
        exit_long ? exit_long->underlying
                  : (exit_short ? exit_short->underlying : tomorrow.target.front().underlying);

    entry.pnl = settle(tomorrow.date, step.entry_value,
                       exit_long ? std::optional<double>(exit_long->mid_price) : std::nullopt,
                       exit_short ? std::optional<double>(exit_short->mid_price) : std::nullopt,
                       step.decision.hedge_delta, exit_underlying);
    ledger.cumulative += entry.pnl.pnl;
    entry.pnl.cumulative = ledger.cumulative;
    entry.settled = true;

    // hit: every traded leg's realized IV move has the forecast sign
    bool hit = true;
    if (step.decision.long_leg) {
      const auto& q0 = days[t].target[step.slice[step.decision.long_leg->index]];
      hit = hit && (exit_long->implied_vol - q0.implied_vol > 0.0);
    }
    if (step.decision.short_leg) {
      const auto& q0 = days[t].target[step.slice[step.decision.short_leg->index]];
      hit = hit && (exit_short->implied_vol - q0.implied_vol < 0.0);
    }
    entry.hit = hit;
    ledger.hits += hit;
    ++ledger.periods_settled;

    const double net = (step.decision.long_leg ? 1.0 : 0.0) -
                       (step.decision.short_leg ? 1.0 : 0.0) - step.decision.hedge_delta;
    entry.net_short = net < 0.0;
    ledger.net_short_count += entry.net_short;
    switch (step.decision.classification) {
      case TradeClass::long_only: ++ledger.long_only; break;
      case TradeClass::short_only: ++ledger.short_only; break;
      case TradeClass::mixed: ++ledger.mixed; break;
      case TradeClass::none: break;
    }
    ledger.entries.push_back(std::move(entry));
  }
  return ledger;
}

inline void write_ledger(const std::string& path, const TradeLedger& ledger,
                         const std::vector<std::string>& comment_lines = {}) {
  csv::Writer writer(path);
  for (const auto& c : comment_lines) writer.comment(c);
  writer.row({"date", "class", "long_id", "short_id", "hedge_delta", "entry_value",
              "exit_value", "pnl", "cumulative"});
  for (const auto& e : ledger.entries) {
    if (!e.settled) {
      writer.row({e.date.iso(), e.skip_reason.empty() ? "skipped" : "skipped:" + e.skip_reason,
                  "", "", "", "", "", "", ""});
      continue;
    }
    writer.row({e.date.iso(), to_string(e.decision.classification),
                e.decision.long_leg ? e.decision.long_leg->quote_id : "",
                e.decision.short_leg ? e.decision.short_leg->quote_id : "",
                csv::num(e.decision.hedge_delta), csv::num(e.pnl.entry_value),
                csv::num(e.pnl.exit_value), csv::num(e.pnl.pnl), csv::num(e.pnl.cumulative)});
  }
}

}  // namespace letflab::strategy
