#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "letflab/config.hpp"
#include "letflab/pipeline.hpp"
#include "letflab/serialize.hpp"

using namespace letflab;

TEST_SUITE_BEGIN("cli");

TEST_CASE("config: parsing, comments, sections") {
  const auto cfg = RunConfig::parse_text(
      "# a comment line\n"
      "seed = 42\n"
      "strategy.window = 60   # trailing comment\n"
      "strategy.tau_star = 0.6\n"
      "data.source_ticker = SPY\n"
      "\n");
  CHECK(cfg.get_int("seed", 0) == 42);
  CHECK(cfg.get_int("strategy.window", 0) == 60);
  CHECK(cfg.get_real("strategy.tau_star", 0.0) == 0.6);
  CHECK(cfg.get_text("data.source_ticker", "") == "SPY");
  CHECK(cfg.get_real("bands.alpha", 0.05) == 0.05);  // fallback
}

TEST_CASE("config: unknown keys are an error in strict mode") {
  CHECK_THROWS_WITH_AS(RunConfig::parse_text("strategy.windw = 60\n"),
                       doctest::Contains("unknown key"), std::runtime_error);
  CHECK_THROWS_AS(RunConfig::parse_text("made.up = 1\n"), std::runtime_error);
}

TEST_CASE("config: numeric keys are range-checked") {
  CHECK_THROWS_WITH_AS(RunConfig::parse_text("strategy.window = 5\n"),
                       doctest::Contains("outside"), std::runtime_error);
  CHECK_THROWS_WITH_AS(RunConfig::parse_text("heston.rho = 1.5\n"),
                       doctest::Contains("outside"), std::runtime_error);
  CHECK_THROWS_WITH_AS(RunConfig::parse_text("bands.alpha = abc\n"),
                       doctest::Contains("non-numeric"), std::runtime_error);
}

TEST_CASE("config: hash is stable and independent of key order") {
  const auto a = RunConfig::parse_text("seed = 1\nstrategy.window = 60\n");
  const auto b = RunConfig::parse_text("strategy.window = 60\nseed = 1\n");
  const auto c = RunConfig::parse_text("strategy.window = 61\nseed = 1\n");
  CHECK(a.hash_hex() == b.hash_hex());
  CHECK(a.hash_hex() != c.hash_hex());
  CHECK(a.hash_hex().size() == 16);
}

TEST_CASE("serialization: Heston params and calibration report round-trip") {
  heston::HestonParams p{2.0, 0.05, 0.4, 0.03, -0.6};
  const auto j = io::to_json(p);
  const auto q = io::heston_params_from_json(j);
  CHECK(q.kappa == p.kappa);
  CHECK(q.theta == p.theta);
  CHECK(q.sigma == p.sigma);
  CHECK(q.v0 == p.v0);
  CHECK(q.rho == p.rho);
}

TEST_CASE("calibration-backed condvar source refreshes per step and caches by date") {
  // a small true-Heston chain so the per-step calibration has a fixed point
  const heston::HestonParams truth{2.0, 0.05, 0.4, 0.04, -0.6};
  const heston::CarryTerms carry{0.01, 0.0};
  std::vector<OptionQuote> chain;
  for (double k : {85.0, 95.0, 100.0, 105.0, 115.0}) {
    for (double t : {0.4, 0.6}) {
      OptionQuote q;
      q.obs_date = Date::parse("2015-03-02");
      q.expiry_date = Date::parse("2016-03-02");
      q.ticker = "SPY1";
      q.strike = k;
      q.ttm = t;
      q.underlying = 100.0;
      q.mid_price = heston::price_call(truth, carry, 100.0, k, t);
      q.implied_vol = heston::implied_vol_from_price(q.mid_price, 100.0, k, t, carry);
      chain.push_back(q);
    }
  }

  pipeline::HestonMcCondVarSource source(carry, 0.6, 20000, 21, 99);
  CHECK_THROWS_AS(source.context({"A", 1, 0, 0}, {"B", 2, 0, 0}, 0.01, 0.6),
                  std::runtime_error);  // begin_step not called yet

  source.begin_step(chain.front().obs_date, chain);
  const auto ctx = source.context({"A", 1, 0, 0}, {"B", 2, 0, 0}, 0.01, 0.6);
  REQUIRE(ctx.curve.has_value());
  // roughly theta * ttm at the money for these parameters
  const double atm = ctx.curve->interpolate(0.0);
  CHECK(atm > 0.01);
  CHECK(atm < 0.06);

  // second call on the same date hits the cache and yields the same curve
  source.begin_step(chain.front().obs_date, chain);
  const auto ctx2 = source.context({"A", 1, 0, 0}, {"B", 2, 0, 0}, 0.01, 0.6);
  CHECK(ctx2.curve->interpolate(0.0) == atm);

  // maturity rescaling is linear in ttm
  const auto ctx_half = source.context({"A", 1, 0, 0}, {"B", 2, 0, 0}, 0.01, 0.3);
  CHECK(ctx_half.curve->interpolate(0.0) == doctest::Approx(0.5 * atm).epsilon(1e-12));
}

TEST_CASE("serialization: dsfm model json round-trip through a file with a header") {
  dsfm::DsfmModel m;
  m.basis = dsfm::BasisSpec::uniform(3, 9, 3, 7);
  m.L = 2;
  m.A = Eigen::MatrixXd::Random(3, m.basis.dim());
  m.Z = Eigen::MatrixXd::Random(10, 3);
  m.Z.col(0).setOnes();

  const auto path = (std::filesystem::temp_directory_path() / "lf_dsfm_rt.json").string();
  io::write_json_file(path, "letf_lab test header", io::to_json(m));
  const auto j = io::read_json_file(path);
  const auto back = io::dsfm_from_json(j);
  CHECK(back.L == 2);
  CHECK((back.A - m.A).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.Z - m.Z).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(back.basis.dim() == m.basis.dim());
}

TEST_SUITE_END();
