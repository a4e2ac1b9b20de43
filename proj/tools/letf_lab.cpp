// letf_lab: model-driven statistical-arbitrage toolkit for (leveraged) ETF
// options. One subcommand per pipeline stage; `demo` runs everything end to
// end on bundled synthetic fixtures.

#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "letflab/pipeline.hpp"

using namespace letflab;

namespace {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string file_header(const std::string& subcommand, const RunConfig* cfg,
                        std::uint64_t seed) {
  return pipeline::run_header(subcommand, cfg ? cfg->hash_hex() : "none", seed);
}

FilterPolicy policy_from_config(const RunConfig& cfg) {
  FilterPolicy pol;
  pol.iv_lo = cfg.get_real("data.iv_lo", pol.iv_lo);
  pol.iv_hi = cfg.get_real("data.iv_hi", pol.iv_hi);
  pol.ttm_lo = cfg.get_real("data.ttm_lo", pol.ttm_lo);
  pol.ttm_hi = cfg.get_real("data.ttm_hi", pol.ttm_hi);
  pol.lm_lo = cfg.get_real("data.lm_lo", pol.lm_lo);
  pol.lm_hi = cfg.get_real("data.lm_hi", pol.lm_hi);
  return pol;
}

int cmd_calibrate(const std::string& quotes_path, const std::string& funds_path, double r,
                  const std::string& ticker_opt, const std::string& out) {
  const auto funds = load_funds(funds_path);
  const auto quotes = load_quotes(quotes_path, funds);
  std::string ticker = ticker_opt;
  if (ticker.empty()) {
    for (const auto& f : funds)
      if (f.beta == 1.0) ticker = f.ticker;
    if (ticker.empty()) ticker = funds.front().ticker;
  }
  const FundSpec& fund = find_fund(funds, ticker);

  Date last = quotes.front().obs_date;
  for (const auto& q : quotes)
    if (q.ticker == ticker) last = std::max(last, q.obs_date);
  std::vector<OptionQuote> chain;
  for (const auto& q : quotes)
    if (q.ticker == ticker && q.obs_date == last) chain.push_back(q);

  const heston::CarryTerms carry{r, fund.c_star()};
  const auto rep = heston::calibrate(chain, carry, {2.0, 0.04, 0.5, 0.04, -0.5});
  auto j = io::to_json(rep);
  j["ticker"] = ticker;
  j["obs_date"] = last.iso();
  j["r"] = r;
  j["c"] = fund.c_star();
  j["n_quotes"] = chain.size();
  io::write_json_file(out, file_header("calibrate", nullptr, 0), j);
  std::cout << "calibrated " << ticker << " on " << last.iso() << ": rmse=" << rep.price_rmse
            << " objective=" << rep.objective
            << (rep.feller_warning ? " (warning: Feller condition violated)" : "") << "\n";
  return 0;
}

int cmd_simulate(const std::string& params_path, double s0, double ttm, int steps, int paths,
                 std::uint64_t seed, const std::string& out) {
  const auto j = io::read_json_file(params_path);
  const auto p = io::heston_params_from_json(j.contains("params") ? j.at("params") : j);
  const heston::CarryTerms carry{j.value("r", 0.0), j.value("c", 0.0)};
  const auto samples =
      heston::simulate_euler(p, carry, s0, ttm, steps, paths, seed, pipeline::env_threads());
  csv::Writer w(out);
  w.comment(file_header("simulate", nullptr, seed));
  w.row({"terminal_price", "integrated_variance", "terminal_variance"});
  for (const auto& s : samples)
    w.row({csv::num(s.terminal_price), csv::num(s.integrated_variance),
           csv::num(s.terminal_variance)});
  return 0;
}

int cmd_condvar(const std::string& params_path, double ttm, int n_paths, int bins, double s0,
                std::uint64_t seed, bool analytic_check, const std::string& out) {
  const auto j = io::read_json_file(params_path);
  const auto p = io::heston_params_from_json(j.contains("params") ? j.at("params") : j);
  const heston::CarryTerms carry{j.value("r", 0.0), j.value("c", 0.0)};
  const int steps = std::max(8, static_cast<int>(std::lround(252.0 * ttm)));
  const auto paths =
      heston::simulate_euler(p, carry, s0, ttm, steps, n_paths, seed, pipeline::env_threads());

  // equidistant S* grid spanning the central terminal-price mass
  std::vector<double> terminals;
  terminals.reserve(paths.size());
  for (const auto& s : paths) terminals.push_back(s.terminal_price);
  const double lo = percentile(terminals, 0.005);
  const double hi = percentile(terminals, 0.995);
  std::vector<double> grid(bins);
  for (int i = 0; i < bins; ++i)
    grid[i] = std::log((lo + (hi - lo) * i / (bins - 1)) / s0);

  const auto curve = condvar::mc_conditional_iv(paths, s0, grid, ttm);
  std::vector<std::string> comments = {file_header("condvar", nullptr, seed)};
  if (analytic_check) {
    const auto det = condvar::analytic_conditional_iv_detail(0.0, p, carry, s0, ttm);
    const double mc_atm = curve.interpolate(0.0);
    comments.push_back("analytic_atm=" + csv::num(det.value) + " mc_atm=" + csv::num(mc_atm) +
                       " rel_diff=" +
                       csv::num(std::fabs(det.value - mc_atm) / std::max(mc_atm, 1e-300)) +
                       " normalization=" + csv::num(det.normalization));
    std::cout << "analytic ATM " << det.value << " vs MC " << mc_atm << "\n";
  }
  condvar::write_curve(out, curve, comments);
  return 0;
}

int cmd_scale(const std::string& quotes_path, const std::string& funds_path,
              const std::string& from, const std::string& to, const std::string& curve_path,
              double r, const std::string& out) {
  const auto funds = load_funds(funds_path);
  const auto quotes = load_quotes(quotes_path, funds);
  const auto curve = condvar::read_curve(curve_path);

  moneyness::ScalingContext ctx;
  ctx.source = find_fund(funds, from);
  ctx.target = find_fund(funds, to);
  ctx.r = r;
  ctx.ttm = curve.ttm;
  ctx.curve = curve;

  std::vector<OptionQuote> slice;
  for (const auto& q : quotes)
    if (q.ticker == from && std::fabs(q.ttm - curve.ttm) <= 1.0 / 365.0) slice.push_back(q);
  if (slice.empty())
    throw ValidationError("scale: no quotes for " + from + " at the curve maturity");
  const auto scaled = moneyness::scale_quote_set(slice, ctx);

  csv::Writer w(out);
  w.comment(file_header("scale", nullptr, 0));
  w.row({"lm_source", "scaled_lm", "implied_vol", "extrapolated"});
  for (std::size_t i = 0; i < scaled.size(); ++i)
    w.row({csv::num(log_moneyness(slice[i])), csv::num(scaled[i].scaled_lm),
           csv::num(scaled[i].implied_vol), scaled[i].extrapolated ? "1" : "0"});
  return 0;
}

int cmd_bands(const std::string& quotes_path, const std::string& funds_path, double ttm,
              const std::string& ticker, double alpha, int B, double h_opt, std::uint64_t seed,
              const std::string& out) {
  const auto funds = load_funds(funds_path);
  const auto quotes = load_quotes(quotes_path, funds);
  std::vector<double> x, y;
  for (const auto& q : quotes)
    if ((ticker.empty() || q.ticker == ticker) && std::fabs(q.ttm - ttm) <= 1.0 / 365.0) {
      x.push_back(log_moneyness(q));
      y.push_back(q.implied_vol);
    }
  if (x.size() < 10) throw ValidationError("bands: fewer than 10 quotes at that maturity");

  msmooth::SmootherConfig cfg;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  for (int i = 0; i < 41; ++i) cfg.eval_grid.push_back(*lo + (*hi - *lo) * i / 40.0);
  const double span = *hi - *lo;
  cfg.h = h_opt > 0.0 ? h_opt
                      : msmooth::cv_bandwidth(
                            x, y, cfg, {span * 0.05, span * 0.1, span * 0.15, span * 0.25});
  const double g = cfg.h * std::pow(static_cast<double>(x.size()), 1.0 / 5.0 - 1.0 / 9.0);
  const auto band = msmooth::uniform_band(x, y, cfg, g, B, alpha, seed);

  csv::Writer w(out);
  w.comment(file_header("bands", nullptr, seed));
  w.comment("h=" + csv::num(cfg.h) + " g=" + csv::num(g) + " alpha=" + csv::num(alpha) +
            " B=" + std::to_string(B) + " d_star=" + csv::num(band.d_star));
  w.row({"x", "fit", "lower", "upper"});
  for (std::size_t j = 0; j < band.grid.size(); ++j)
    w.row({csv::num(band.grid[j]), csv::num(band.fit[j]), csv::num(band.lower[j]),
           csv::num(band.upper[j])});
  return 0;
}

int cmd_dsfm_fit(const std::string& panels_path, int L, const std::string& out) {
  const auto table = csv::read_file(panels_path);
  const int ci_t = table.column("t"), ci_m = table.column("x_m"), ci_tt = table.column("x_t"),
            ci_y = table.column("y");
  if (ci_t < 0 || ci_m < 0 || ci_tt < 0 || ci_y < 0)
    throw ValidationError("dsfm: panel csv needs columns t,x_m,x_t,y");
  std::map<int, dsfm::DayPanel> by_day;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const int t = static_cast<int>(csv::to_double(row[ci_t], "t", i + 2));
    auto& panel = by_day[t];
    panel.t = t;
    panel.points.push_back({csv::to_double(row[ci_m], "x_m", i + 2),
                            csv::to_double(row[ci_tt], "x_t", i + 2),
                            csv::to_double(row[ci_y], "y", i + 2)});
  }
  std::vector<dsfm::DayPanel> panels;
  for (auto& [t, p] : by_day) panels.push_back(std::move(p));

  const auto basis = dsfm::BasisSpec::uniform(3, 9, 3, 7);
  const auto model = dsfm::fit(panels, L, basis);
  auto j = io::to_json(model);
  j["ev"] = dsfm::explained_variance(model, panels);
  j["rmse"] = dsfm::rmse(model, panels);
  io::write_json_file(out, file_header("dsfm", nullptr, 0), j);
  std::cout << "dsfm: L=" << L << " ev=" << j["ev"] << " rmse=" << j["rmse"] << "\n";
  return 0;
}

int cmd_var_fit(const std::string& z_path, int pmax, int lags, const std::string& out) {
  const auto table = csv::read_file(z_path);
  const std::size_t L = table.header.size();
  Eigen::MatrixXd z(table.rows.size(), L);
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    for (std::size_t j = 0; j < L; ++j)
      z(i, j) = csv::to_double(table.rows[i][j], table.header[j], i + 2);
  const auto sel = varf::select_order(z, pmax);
  const auto model = varf::fit_var(z, sel.p_aic);
  const auto stab = varf::is_stable(model);
  varf::PortmanteauResult pt;
  const bool have_pt = lags > model.p && lags < static_cast<int>(model.residuals.rows());
  if (have_pt) pt = varf::portmanteau(model, lags);
  io::write_json_file(out, file_header("var", nullptr, 0),
                      io::to_json(model, &sel, &stab, have_pt ? &pt : nullptr));
  std::cout << "var: selected p=" << sel.p_aic << " stable=" << (stab.stable ? "yes" : "no")
            << "\n";
  return 0;
}

strategy::StrategyConfig strategy_config_from(const RunConfig& cfg) {
  strategy::StrategyConfig scfg;
  scfg.window_w = static_cast<int>(cfg.get_int("strategy.window", 100));
  scfg.tau_star = cfg.get_real("strategy.tau_star", 0.6);
  scfg.tau_slice_tol = cfg.get_real("strategy.tau_tol", 2.0 / 365.0);
  scfg.L = static_cast<int>(cfg.get_int("dsfm.L", 3));
  scfg.r = cfg.get_real("strategy.r", 0.0);
  scfg.var_order = 1;
  scfg.dsfm_tol = cfg.get_real("dsfm.tol", 1e-7);
  scfg.dsfm_max_iter = static_cast<int>(cfg.get_int("dsfm.max_iter", 200));
  scfg.basis = dsfm::BasisSpec::uniform(static_cast<int>(cfg.get_int("dsfm.order", 3)),
                                        static_cast<int>(cfg.get_int("dsfm.knots_m", 9)),
                                        static_cast<int>(cfg.get_int("dsfm.order", 3)),
                                        static_cast<int>(cfg.get_int("dsfm.knots_t", 7)));
  const std::string hedge = cfg.get_text("strategy.hedge_model", "black_scholes_delta");
  if (hedge == "black_scholes_delta")
    scfg.hedge_model = strategy::HedgeModel::black_scholes_delta;
  else if (hedge == "external_delta")
    scfg.hedge_model = strategy::HedgeModel::external_delta;
  else
    throw ValidationError("config: strategy.hedge_model must be black_scholes_delta or "
                          "external_delta");
  return scfg;
}

struct CondVarChoice {
  std::unique_ptr<strategy::CondVarSource> source;
};

CondVarChoice condvar_from(const RunConfig& cfg, std::uint64_t seed) {
  CondVarChoice out;
  const std::string mode = cfg.get_text("strategy.condvar_mode", "constant");
  if (mode == "constant") {
    out.source = std::make_unique<strategy::ConstantVarianceSource>(
        cfg.get_real("scaling.constant_variance", 0.04));
  } else if (mode == "heston_mc") {
    const heston::CarryTerms carry{cfg.get_real("heston.r", 0.0), cfg.get_real("heston.c", 0.0)};
    out.source = std::make_unique<pipeline::HestonMcCondVarSource>(
        carry, cfg.get_real("condvar.ttm", 0.6),
        static_cast<int>(cfg.get_int("condvar.paths", 50000)),
        static_cast<int>(cfg.get_int("condvar.bins", 41)),
        RandomStream::mix(seed ^ RandomStream::hash_tag("strategy.condvar")));
  } else {
    throw ValidationError("config: strategy.condvar_mode must be constant or heston_mc");
  }
  return out;
}

int cmd_backtest(const std::string& quotes_path, const std::string& funds_path,
                 const std::string& config_path, std::uint64_t seed,
                 const std::string& out_ledger, const std::string& out_summary) {
  const auto cfg = RunConfig::parse_file(config_path);
  const auto funds = load_funds(funds_path);
  auto quotes = load_quotes(quotes_path, funds);
  quotes = apply_filter(quotes, policy_from_config(cfg));

  strategy::BacktestInput input;
  input.source_fund = find_fund(funds, cfg.get_text("data.source_ticker", funds.front().ticker));
  input.target_fund = find_fund(funds, cfg.get_text("data.target_ticker", funds.back().ticker));
  input.quotes = std::move(quotes);
  const auto choice = condvar_from(cfg, seed);
  input.condvar = choice.source.get();

  const auto scfg = strategy_config_from(cfg);
  const auto ledger = strategy::run_backtest(input, scfg);
  const std::string header = file_header("backtest", &cfg, seed);
  strategy::write_ledger(out_ledger, ledger, {header});
  io::write_json_file(out_summary, header,
                      {{"periods_considered", ledger.periods_considered},
                       {"periods_settled", ledger.periods_settled},
                       {"hits", ledger.hits},
                       {"hit_rate", ledger.hit_rate()},
                       {"long_only", ledger.long_only},
                       {"short_only", ledger.short_only},
                       {"mixed", ledger.mixed},
                       {"net_short", ledger.net_short_count},
                       {"cumulative", ledger.cumulative}});
  std::cout << "backtest: " << ledger.periods_settled << "/" << ledger.periods_considered
            << " periods settled, cumulative " << ledger.cumulative << ", hit rate "
            << ledger.hit_rate() << "\n";
  return 0;
}

int cmd_robustness(const std::string& quotes_path, const std::string& funds_path,
                   const std::string& config_path, int iters, int block, std::uint64_t seed,
                   const std::string& out) {
  const auto cfg = RunConfig::parse_file(config_path);
  const auto funds = load_funds(funds_path);
  auto quotes = load_quotes(quotes_path, funds);
  quotes = apply_filter(quotes, policy_from_config(cfg));

  strategy::BacktestInput input;
  input.source_fund = find_fund(funds, cfg.get_text("data.source_ticker", funds.front().ticker));
  input.target_fund = find_fund(funds, cfg.get_text("data.target_ticker", funds.back().ticker));
  input.quotes = std::move(quotes);
  const auto choice = condvar_from(cfg, seed);
  input.condvar = choice.source.get();

  resample::BlockBootstrapConfig boot;
  boot.block_size = block;
  boot.n_iterations = iters;
  boot.seed = seed;
  const auto rob = resample::run_robustness(input, strategy_config_from(cfg), boot);

  csv::Writer w(out);
  w.comment(file_header("robustness", &cfg, seed));
  w.row({"period", "p2.5", "median", "p97.5"});
  for (Eigen::Index t = 0; t < rob.envelope.median.size(); ++t)
    w.row({std::to_string(t), csv::num(rob.envelope.percentiles(0, t)),
           csv::num(rob.envelope.median(t)), csv::num(rob.envelope.percentiles(1, t))});
  std::cout << "robustness: " << iters << " iterations, final median "
            << rob.envelope.median(rob.envelope.median.size() - 1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"letf_lab: statistical-arbitrage pipeline for (L)ETF options"};
  app.require_subcommand(1);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "fit Heston parameters to a quote chain");
  std::string c_quotes, c_funds, c_out, c_ticker;
  double c_r = 0.0;
  calibrate->add_option("--quotes", c_quotes, "option-chain csv")->required();
  calibrate->add_option("--funds", c_funds, "fund metadata csv")->required();
  calibrate->add_option("--r", c_r, "risk-free rate")->required();
  calibrate->add_option("--out", c_out, "output json")->required();
  calibrate->add_option("--ticker", c_ticker, "fund to calibrate (default: the beta=1 fund)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Euler Monte-Carlo paths");
  std::string s_params, s_out;
  double s_s0 = 100.0, s_ttm = 1.0;
  int s_steps = 252, s_paths = 100000;
  std::uint64_t s_seed = 1;
  simulate->add_option("--params", s_params, "Heston params json")->required();
  simulate->add_option("--s0", s_s0, "spot");
  simulate->add_option("--ttm", s_ttm, "horizon in years");
  simulate->add_option("--steps", s_steps, "Euler steps");
  simulate->add_option("--paths", s_paths, "number of paths");
  simulate->add_option("--seed", s_seed, "seed");
  simulate->add_option("--out", s_out, "output csv")->required();

  // condvar
  auto* condvar_cmd = app.add_subcommand("condvar", "conditional integrated-variance curve");
  std::string cv_params, cv_out;
  double cv_ttm = 0.6, cv_s0 = 100.0;
  int cv_paths = 200000, cv_bins = 41;
  std::uint64_t cv_seed = 1;
  bool cv_analytic = false;
  condvar_cmd->add_option("--params", cv_params, "Heston params json")->required();
  condvar_cmd->add_option("--ttm", cv_ttm, "horizon in years")->required();
  condvar_cmd->add_option("--paths", cv_paths, "Monte-Carlo paths");
  condvar_cmd->add_option("--bins", cv_bins, "bins");
  condvar_cmd->add_option("--s0", cv_s0, "spot");
  condvar_cmd->add_option("--seed", cv_seed, "seed");
  condvar_cmd->add_flag("--analytic-check", cv_analytic, "compare against the analytic value");
  condvar_cmd->add_option("--out", cv_out, "output csv")->required();

  // scale
  auto* scale = app.add_subcommand("scale", "moneyness scaling between leverage ratios");
  std::string sc_quotes, sc_funds, sc_from, sc_to, sc_curve, sc_out;
  double sc_r = 0.0;
  scale->add_option("--quotes", sc_quotes, "option-chain csv")->required();
  scale->add_option("--funds", sc_funds, "fund metadata csv")->required();
  scale->add_option("--from", sc_from, "source ticker")->required();
  scale->add_option("--to", sc_to, "target ticker")->required();
  scale->add_option("--condvar", sc_curve, "conditional-variance curve csv")->required();
  scale->add_option("--r", sc_r, "risk-free rate")->required();
  scale->add_option("--out", sc_out, "output csv")->required();

  // bands
  auto* bands = app.add_subcommand("bands", "bootstrap uniform confidence band");
  std::string b_quotes, b_funds, b_out, b_ticker;
  double b_ttm = 0.5, b_alpha = 0.05, b_h = 0.0;
  int b_B = 1000;
  std::uint64_t b_seed = 1;
  bands->add_option("--quotes", b_quotes, "option-chain csv")->required();
  bands->add_option("--funds", b_funds, "fund metadata csv")->required();
  bands->add_option("--ttm", b_ttm, "maturity slice")->required();
  bands->add_option("--ticker", b_ticker, "restrict to one ticker");
  bands->add_option("--alpha", b_alpha, "band level");
  bands->add_option("--B", b_B, "bootstrap replicates");
  bands->add_option("--bandwidth", b_h, "bandwidth (default: cross-validated)");
  bands->add_option("--seed", b_seed, "seed");
  bands->add_option("--out", b_out, "output csv")->required();

  // dsfm fit
  auto* dsfm_cmd = app.add_subcommand("dsfm", "dynamic semiparametric factor model");
  auto* dsfm_fit = dsfm_cmd->add_subcommand("fit", "fit on a panel csv");
  std::string d_panels, d_out;
  int d_L = 3;
  dsfm_fit->add_option("--panels", d_panels, "panel csv (t,x_m,x_t,y)")->required();
  dsfm_fit->add_option("--L", d_L, "number of dynamic factors");
  dsfm_fit->add_option("--out", d_out, "output json")->required();

  // var fit
  auto* var_cmd = app.add_subcommand("var", "vector autoregression of the loadings");
  auto* var_fit_cmd = var_cmd->add_subcommand("fit", "fit with order selection");
  std::string v_z, v_out;
  int v_pmax = 5, v_lags = 12;
  var_fit_cmd->add_option("--z", v_z, "loading csv (one column per factor)")->required();
  var_fit_cmd->add_option("--pmax", v_pmax, "maximum order");
  var_fit_cmd->add_option("--lags", v_lags, "portmanteau lags");
  var_fit_cmd->add_option("--out", v_out, "output json")->required();

  // backtest
  auto* backtest = app.add_subcommand("backtest", "rolling trade-with-the-smile backtest");
  std::string bt_quotes, bt_funds, bt_config, bt_ledger, bt_summary;
  std::uint64_t bt_seed = 1;
  backtest->add_option("--quotes", bt_quotes, "option-chain csv")->required();
  backtest->add_option("--funds", bt_funds, "fund metadata csv")->required();
  backtest->add_option("--config", bt_config, "run configuration")->required();
  backtest->add_option("--seed", bt_seed, "seed");
  backtest->add_option("--out-ledger", bt_ledger, "ledger csv")->required();
  backtest->add_option("--out-summary", bt_summary, "summary json")->required();

  // robustness
  auto* robustness = app.add_subcommand("robustness", "block-bootstrap strategy envelope");
  std::string rb_quotes, rb_funds, rb_config, rb_out;
  int rb_iters = 500, rb_block = 5;
  std::uint64_t rb_seed = 1;
  robustness->add_option("--quotes", rb_quotes, "option-chain csv")->required();
  robustness->add_option("--funds", rb_funds, "fund metadata csv")->required();
  robustness->add_option("--config", rb_config, "run configuration")->required();
  robustness->add_option("--iters", rb_iters, "bootstrap iterations");
  robustness->add_option("--block", rb_block, "block size");
  robustness->add_option("--seed", rb_seed, "seed");
  robustness->add_option("--out", rb_out, "output csv")->required();

  // demo
  auto* demo = app.add_subcommand("demo", "full pipeline on bundled synthetic fixtures");
  std::string dm_out = "demo_out";
  std::uint64_t dm_seed = 7;
  demo->add_option("--seed", dm_seed, "seed");
  demo->add_option("--out", dm_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // validation error: unknown subcommand, missing flag, bad value
  }

  try {
    if (*calibrate) return cmd_calibrate(c_quotes, c_funds, c_r, c_ticker, c_out);
    if (*simulate) return cmd_simulate(s_params, s_s0, s_ttm, s_steps, s_paths, s_seed, s_out);
    if (*condvar_cmd)
      return cmd_condvar(cv_params, cv_ttm, cv_paths, cv_bins, cv_s0, cv_seed, cv_analytic,
                         cv_out);
    if (*scale) return cmd_scale(sc_quotes, sc_funds, sc_from, sc_to, sc_curve, sc_r, sc_out);
    if (*bands)
      return cmd_bands(b_quotes, b_funds, b_ttm, b_ticker, b_alpha, b_B, b_h, b_seed, b_out);
    if (*dsfm_cmd) {
      if (*dsfm_fit) return cmd_dsfm_fit(d_panels, d_L, d_out);
      std::cerr << "dsfm: expected a subcommand (fit)\n";
      return 2;
    }
    if (*var_cmd) {
      if (*var_fit_cmd) return cmd_var_fit(v_z, v_pmax, v_lags, v_out);
      std::cerr << "var: expected a subcommand (fit)\n";
      return 2;
    }
    if (*backtest)
      return cmd_backtest(bt_quotes, bt_funds, bt_config, bt_seed, bt_ledger, bt_summary);
    if (*robustness)
      return cmd_robustness(rb_quotes, rb_funds, rb_config, rb_iters, rb_block, rb_seed, rb_out);
    if (*demo) return pipeline::run_demo(dm_out, dm_seed, std::cout);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
