#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "letflab/dsfm/dsfm.hpp"
#include "letflab/heston/calibrate.hpp"
#include "letflab/var_forecast.hpp"

namespace letflab::io {

using nlohmann::json;

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j.at(0).size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

inline json to_json(const heston::HestonParams& p) {
  return {{"kappa", p.kappa}, {"theta", p.theta}, {"sigma", p.sigma}, {"v0", p.v0},
          {"rho", p.rho}};
}

inline heston::HestonParams heston_params_from_json(const json& j) {
  heston::HestonParams p;
  p.kappa = j.at("kappa").get<double>();
  p.theta = j.at("theta").get<double>();
  p.sigma = j.at("sigma").get<double>();
  p.v0 = j.at("v0").get<double>();
  p.rho = j.at("rho").get<double>();
  p.validate();
  return p;
}

inline json to_json(const heston::CalibrationReport& rep) {
  return {{"params", to_json(rep.params)},
          {"objective", rep.objective},
          {"price_rmse", rep.price_rmse},
          {"residuals", rep.residuals},
          {"iterations", rep.iterations},
          {"starts_used", rep.starts_used},
          {"converged", rep.converged},
          {"feller_warning", rep.feller_warning}};
}

inline json to_json(const dsfm::DsfmModel& m) {
  return {{"basis",
           {{"order_m", m.basis.order_m},
            {"order_t", m.basis.order_t},
            {"knots_m", m.basis.knots_m},
            {"knots_t", m.basis.knots_t}}},
          {"L", m.L},
          {"A", to_json(m.A)},
          {"Z", to_json(m.Z)},
          {"report",
           {{"iterations", m.report.iterations},
            {"objective", m.report.objective},
            {"converged", m.report.converged},
            {"ridge_fallbacks", m.report.ridge_fallbacks}}}};
}

inline dsfm::DsfmModel dsfm_from_json(const json& j) {
  dsfm::DsfmModel m;
  m.basis.order_m = j.at("basis").at("order_m").get<int>();
  m.basis.order_t = j.at("basis").at("order_t").get<int>();
  m.basis.knots_m = j.at("basis").at("knots_m").get<std::vector<double>>();
  m.basis.knots_t = j.at("basis").at("knots_t").get<std::vector<double>>();
  m.basis.validate();
  m.L = j.at("L").get<int>();
  m.A = matrix_from_json(j.at("A"));
  m.Z = matrix_from_json(j.at("Z"));
  return m;
}

inline json to_json(const varf::VarModel& m, const varf::OrderSelection* sel = nullptr,
                    const varf::StabilityReport* stab = nullptr,
                    const varf::PortmanteauResult* pt = nullptr) {
  json j = {{"p", m.p}, {"dim", m.dim}};
  j["intercept"] = std::vector<double>(m.intercept.data(), m.intercept.data() + m.intercept.size());
  json coefs = json::array();
  for (const auto& a : m.coef) coefs.push_back(to_json(a));
  j["coef"] = std::move(coefs);
  j["resid_cov"] = to_json(m.resid_cov);
  if (sel) {
    j["selection"] = {{"p_aic", sel->p_aic}, {"p_hq", sel->p_hq}, {"p_sc", sel->p_sc},
                      {"aic", sel->aic},     {"hq", sel->hq},     {"sc", sel->sc}};
  }
  if (stab) j["stability"] = {{"stable", stab->stable}, {"moduli", stab->moduli}};
  if (pt) {
    j["portmanteau"] = {{"statistic", pt->statistic}, {"dof", pt->dof},
                        {"p_value", pt->p_value}};
  }
  return j;
}

/// Write JSON preceded by the run-header comment line; readers skip '#' lines.
inline void write_json_file(const std::string& path, const std::string& header, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# " << header << "\n" << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string text, line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    text += line;
    text += '\n';
  }
  return json::parse(text);
}

}  // namespace letflab::io
