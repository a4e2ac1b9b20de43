#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "letflab/heston/heston.hpp"
#include "letflab/market_data.hpp"

namespace letflab::heston {

struct CalibrationReport {
  HestonParams params;
  double objective = 0.0;           // sum of squared price differences
  double price_rmse = 0.0;
  std::vector<double> residuals;    // model price - market mid, per quote
  std::vector<double> objective_trace;  // accepted objective after each iteration
  int iterations = 0;
  int starts_used = 1;
  bool converged = false;
  bool feller_warning = false;
};

struct CalibrationError : std::runtime_error {
  CalibrationReport best;
  explicit CalibrationError(const std::string& what, CalibrationReport b)
      : std::runtime_error(what), best(std::move(b)) {}
};

namespace detail {

struct Box {
  std::array<double, 5> lo{0.01, 1e-4, 0.01, 1e-4, -0.99};
  std::array<double, 5> hi{20.0, 1.0, 3.0, 1.0, 0.99};
};

inline std::array<double, 5> to_vec(const HestonParams& p) {
  return {p.kappa, p.theta, p.sigma, p.v0, p.rho};
}

inline HestonParams from_vec(const std::array<double, 5>& v) {
  return HestonParams{v[0], v[1], v[2], v[3], v[4]};
}

inline std::array<double, 5> clamp_box(std::array<double, 5> v, const Box& box) {
  for (int j = 0; j < 5; ++j) v[j] = std::min(std::max(v[j], box.lo[j]), box.hi[j]);
  return v;
}

}  // namespace detail

/// Least-squares Heston calibration to market call prices.
/// min_theta sum_i (C_model(K_i, tau_i) - C_market_i)^2, box-constrained
/// Levenberg-Marquardt with a forward-difference Jacobian; steps are
/// accepted only when the objective decreases. Up to two extra perturbed
/// starts when the first run fails to converge.
inline CalibrationReport calibrate(const std::vector<OptionQuote>& quotes,
                                   const CarryTerms& carry, const HestonParams& init,
                                   int max_iter = 200) {
  if (quotes.size() < 5)
    throw std::invalid_argument("calibrate: need at least 5 quotes");
  {
    std::set<long> maturities;
    for (const auto& q : quotes) maturities.insert(std::lround(q.ttm * 365.0));
    if (maturities.size() < 2)
      throw std::invalid_argument("calibrate: quotes must span at least 2 maturities");
  }
  init.validate();

  const detail::Box box;
  const int n = static_cast<int>(quotes.size());

  const auto residuals_of = [&](const std::array<double, 5>& v, Eigen::VectorXd& r) {
    const HestonParams p = detail::from_vec(v);
    for (int i = 0; i < n; ++i)
      r(i) = price_call(p, carry, quotes[i].underlying, quotes[i].strike, quotes[i].ttm) -
             quotes[i].mid_price;
  };

  const auto run_lm = [&](std::array<double, 5> v, CalibrationReport& rep) {
    v = detail::clamp_box(v, box);
    Eigen::VectorXd r(n), r_try(n);
    residuals_of(v, r);
    double f = r.squaredNorm();
    rep.objective_trace.clear();
    rep.objective_trace.push_back(f);
    double lambda = 1e-3;
    bool converged = false;
    int it = 0;
    for (; it < max_iter; ++it) {
      if (f < 1e-18) {
        converged = true;
        break;
      }
      Eigen::MatrixXd J(n, 5);
      for (int j = 0; j < 5; ++j) {
        auto vp = v;
        double h = 1e-6 * std::max(1.0, std::fabs(v[j]));
        if (vp[j] + h > box.hi[j]) h = -h;  // difference inward at the box edge
        vp[j] += h;
        residuals_of(vp, r_try);
        J.col(j) = (r_try - r) / h;
      }
      const Eigen::VectorXd grad = J.transpose() * r;
      if (grad.lpNorm<Eigen::Infinity>() < 1e-9 * std::max(1.0, f)) {
        converged = true;
        break;
      }
      const Eigen::MatrixXd jtj = J.transpose() * J;
      bool accepted = false;
      for (int tries = 0; tries < 40; ++tries) {
        Eigen::MatrixXd A = jtj;
        for (int j = 0; j < 5; ++j) A(j, j) += lambda * std::max(jtj(j, j), 1e-12);
        const Eigen::VectorXd delta = A.ldlt().solve(-grad);
        auto v_try = v;
        for (int j = 0; j < 5; ++j) v_try[j] += delta(j);
        v_try = detail::clamp_box(v_try, box);
        residuals_of(v_try, r_try);
        const double f_try = r_try.squaredNorm();
        if (f_try < f) {
          double step = 0.0;
          for (int j = 0; j < 5; ++j) step = std::max(step, std::fabs(v_try[j] - v[j]));
          v = v_try;
          r = r_try;
          f = f_try;
          rep.objective_trace.push_back(f);
          lambda = std::max(lambda / 3.0, 1e-12);
          accepted = true;
          if (step < 1e-12) converged = true;
          break;
        }
        lambda *= 4.0;
        if (lambda > 1e12) break;
      }
      if (!accepted) {
        converged = grad.lpNorm<Eigen::Infinity>() < 1e-6 * std::max(1.0, f);
        break;
      }
      if (converged) break;
    }
    rep.params = detail::from_vec(v);
    rep.objective = f;
    rep.price_rmse = std::sqrt(f / n);
    rep.residuals.assign(r.data(), r.data() + n);
    rep.iterations = it;
    rep.converged = converged;
    rep.feller_warning = !rep.params.feller_holds();
  };

  CalibrationReport best;
  run_lm(detail::to_vec(init), best);
  int starts = 1;
  if (!best.converged) {
    // deterministic perturbed restarts
    const double bumps[2] = {0.85, 1.2};
    for (double bump : bumps) {
      auto v = detail::to_vec(init);
      for (int j = 0; j < 4; ++j) v[j] *= bump;
      v[4] = init.rho * (2.0 - bump);
      CalibrationReport rep;
      run_lm(v, rep);
      ++starts;
      if (rep.objective < best.objective || (rep.converged && !best.converged)) best = rep;
      if (best.converged) break;
    }
  }
  best.starts_used = starts;
  if (!best.converged && !(best.objective < 1e-8 * n))
    throw CalibrationError("calibrate: optimizer failed to converge (best objective " +
                               std::to_string(best.objective) + ")",
                           best);
  return best;
}

}  // namespace letflab::heston
