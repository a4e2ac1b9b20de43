#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace letflab {

/// Key-value run configuration: `section.key = value` lines, '#' comments.
/// Strict mode: unknown keys are an error; numeric keys are range-checked.
class RunConfig {
 public:
  struct KeySpec {
    enum class Type { real, integer, text } type = Type::real;
    double lo = -1e300, hi = 1e300;
  };

  static const std::map<std::string, KeySpec>& registry() {
    static const std::map<std::string, KeySpec> reg = {
        {"seed", {KeySpec::Type::integer, 0, 9.2e18}},
        {"outdir", {KeySpec::Type::text}},
        {"data.source_ticker", {KeySpec::Type::text}},
        {"data.target_ticker", {KeySpec::Type::text}},
        {"data.iv_lo", {KeySpec::Type::real, 0.0, 10.0}},
        {"data.iv_hi", {KeySpec::Type::real, 0.0, 10.0}},
        {"data.ttm_lo", {KeySpec::Type::real, 0.0, 50.0}},
        {"data.ttm_hi", {KeySpec::Type::real, 0.0, 50.0}},
        {"data.lm_lo", {KeySpec::Type::real, -20.0, 20.0}},
        {"data.lm_hi", {KeySpec::Type::real, -20.0, 20.0}},
        {"heston.kappa", {KeySpec::Type::real, 1e-6, 100.0}},
        {"heston.theta", {KeySpec::Type::real, 1e-8, 10.0}},
        {"heston.sigma", {KeySpec::Type::real, 1e-10, 10.0}},
        {"heston.v0", {KeySpec::Type::real, 0.0, 10.0}},
        {"heston.rho", {KeySpec::Type::real, -0.9999, 0.9999}},
        {"heston.r", {KeySpec::Type::real, -1.0, 1.0}},
        {"heston.c", {KeySpec::Type::real, -1.0, 1.0}},
        {"condvar.paths", {KeySpec::Type::integer, 1, 1e9}},
        {"condvar.steps_per_year", {KeySpec::Type::integer, 1, 1e5}},
        {"condvar.bins", {KeySpec::Type::integer, 2, 1e4}},
        {"condvar.ttm", {KeySpec::Type::real, 1e-4, 50.0}},
        {"scaling.constant_variance", {KeySpec::Type::real, 0.0, 10.0}},
        {"bands.h", {KeySpec::Type::real, 1e-6, 10.0}},
        {"bands.alpha", {KeySpec::Type::real, 1e-4, 0.4999}},
        {"bands.B", {KeySpec::Type::integer, 100, 1e6}},
        {"dsfm.L", {KeySpec::Type::integer, 0, 20}},
        {"dsfm.order", {KeySpec::Type::integer, 2, 6}},
        {"dsfm.knots_m", {KeySpec::Type::integer, 4, 64}},
        {"dsfm.knots_t", {KeySpec::Type::integer, 4, 64}},
        {"dsfm.tol", {KeySpec::Type::real, 1e-15, 1.0}},
        {"dsfm.max_iter", {KeySpec::Type::integer, 1, 1e6}},
        {"var.pmax", {KeySpec::Type::integer, 1, 50}},
        {"var.lags", {KeySpec::Type::integer, 2, 200}},
        {"strategy.window", {KeySpec::Type::integer, 30, 1e5}},
        {"strategy.tau_star", {KeySpec::Type::real, 1e-3, 50.0}},
        {"strategy.tau_tol", {KeySpec::Type::real, 0.0, 1.0}},
        {"strategy.r", {KeySpec::Type::real, -1.0, 1.0}},
        {"strategy.hedge_model", {KeySpec::Type::text}},
        {"strategy.condvar_mode", {KeySpec::Type::text}},
        {"robustness.iters", {KeySpec::Type::integer, 1, 1e6}},
        {"robustness.block", {KeySpec::Type::integer, 1, 1e6}},
    };
    return reg;
  }

  static RunConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
  }

  static RunConfig parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: line " + std::to_string(line_no) +
                                 ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      const auto it = registry().find(key);
      if (it == registry().end())
        throw std::runtime_error("config: unknown key '" + key + "'");
      if (it->second.type != KeySpec::Type::text) {
        double v = 0.0;
        try {
          std::size_t pos = 0;
          v = std::stod(value, &pos);
          if (pos != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
          throw std::runtime_error("config: key '" + key + "' has non-numeric value '" + value +
                                   "'");
        }
        if (v < it->second.lo || v > it->second.hi)
          throw std::runtime_error("config: key '" + key + "' value " + value +
                                   " outside [" + std::to_string(it->second.lo) + ", " +
                                   std::to_string(it->second.hi) + "]");
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double get_real(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stod(it->second);
  }

  long get_int(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stol(it->second);
  }

  std::string get_text(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  /// FNV-1a over the sorted normalized entries; stable across key order.
  std::uint64_t hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    const auto feed = [&h](const std::string& s) {
      for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
      }
    };
    for (const auto& [k, v] : values_) {  // std::map: already sorted
      feed(k);
      feed("=");
      feed(v);
      feed("\n");
    }
    return h;
  }

  std::string hash_hex() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace letflab
