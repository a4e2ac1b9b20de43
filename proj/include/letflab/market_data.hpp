#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "letflab/core/csv.hpp"

namespace letflab {

/// Calendar date, ISO-8601 in files. Stored as y/m/d plus a serial day
/// number so ACT/365 year fractions are a subtraction.
struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  // days since 1970-01-01 (civil-days algorithm)
  long serial() const {
    const int y = year - (month <= 2);
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2u) / 5u + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
  }

  static Date parse(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
      throw std::runtime_error("date: expected ISO-8601 YYYY-MM-DD, got '" + s + "'");
    Date d;
    d.year = std::stoi(s.substr(0, 4));
    d.month = std::stoi(s.substr(5, 2));
    d.day = std::stoi(s.substr(8, 2));
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31)
      throw std::runtime_error("date: out-of-range component in '" + s + "'");
    return d;
  }

  std::string iso() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
  }

  auto operator<=>(const Date& o) const { return serial() <=> o.serial(); }
  bool operator==(const Date& o) const = default;
};

struct FundSpec {
  std::string ticker;
  double beta = 1.0;           // declared leverage ratio
  double expense_ratio = 0.0;  // annualized fraction
  double dividend_yield = 0.0; // annualized fraction

  double c_star() const { return expense_ratio + dividend_yield; }

  void validate() const {
    if (beta == 0.0) throw std::domain_error("fund " + ticker + ": beta must be nonzero");
    if (expense_ratio < 0.0 || dividend_yield < 0.0)
      throw std::domain_error("fund " + ticker + ": expense/dividend must be >= 0");
  }
};

struct OptionQuote {
  Date obs_date;
  std::string ticker;
  double strike = 0.0;
  Date expiry_date;
  double ttm = 0.0;         // years, ACT/365
  double mid_price = 0.0;
  double implied_vol = 0.0;
  double underlying = 0.0;  // (L)ETF level at observation
  std::optional<double> bid;
  std::optional<double> ask;
  std::optional<long> volume;
};

inline double log_moneyness(const OptionQuote& q) {
  if (q.strike <= 0.0 || q.underlying <= 0.0)
    throw std::domain_error("log_moneyness: strike and underlying must be > 0");
  return std::log(q.strike / q.underlying);
}

struct FilterPolicy {
  double iv_lo = 0.01, iv_hi = 3.0;
  double ttm_lo = 0.05, ttm_hi = 2.5;
  double lm_lo = -3.5, lm_hi = 1.0;

  void validate() const {
    if (!(iv_lo < iv_hi) || !(ttm_lo < ttm_hi) || !(lm_lo < lm_hi))
      throw std::domain_error("filter policy: each range needs lower < upper");
  }

  bool keeps(const OptionQuote& q) const {
    const double lm = log_moneyness(q);
    return q.implied_vol >= iv_lo && q.implied_vol <= iv_hi && q.ttm >= ttm_lo &&
           q.ttm <= ttm_hi && lm >= lm_lo && lm <= lm_hi;
  }
};

inline std::vector<OptionQuote> apply_filter(const std::vector<OptionQuote>& quotes,
                                             const FilterPolicy& policy) {
  policy.validate();
  std::vector<OptionQuote> out;
  out.reserve(quotes.size());
  for (const auto& q : quotes)
    if (policy.keeps(q)) out.push_back(q);
  return out;
}

inline std::vector<FundSpec> load_funds(const std::string& path) {
  const auto t = csv::read_file(path);
  for (const char* col : {"ticker", "beta", "expense_ratio", "dividend_yield"})
    if (t.column(col) < 0) throw std::runtime_error("funds csv: missing column " + std::string(col));
  std::vector<FundSpec> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    FundSpec f;
    f.ticker = r[t.column("ticker")];
    f.beta = csv::to_double(r[t.column("beta")], "beta", i + 2);
    f.expense_ratio = csv::to_double(r[t.column("expense_ratio")], "expense_ratio", i + 2);
    f.dividend_yield = csv::to_double(r[t.column("dividend_yield")], "dividend_yield", i + 2);
    f.validate();
    out.push_back(std::move(f));
  }
  return out;
}

inline const FundSpec& find_fund(const std::vector<FundSpec>& funds, const std::string& ticker) {
  for (const auto& f : funds)
    if (f.ticker == ticker) return f;
  throw std::runtime_error("unknown ticker '" + ticker + "' (no fund metadata)");
}

/// Load and validate the option-chain CSV. Schema (header required):
/// obs_date,ticker,strike,expiry_date,ttm_years,mid_price,implied_vol,underlying,bid,ask,volume
/// bid/ask/volume may be empty; ttm_years, if empty, is derived ACT/365 from the dates.
/// Duplicate (date,ticker,strike,expiry) keys keep the row with the highest
/// volume, else the last one seen.
inline std::vector<OptionQuote> load_quotes(const std::string& path,
                                            const std::vector<FundSpec>& funds) {
  const auto t = csv::read_file(path);
  for (const char* col : {"obs_date", "ticker", "strike", "expiry_date", "ttm_years",
                          "mid_price", "implied_vol", "underlying", "bid", "ask", "volume"})
    if (t.column(col) < 0) throw std::runtime_error("quotes csv: missing column " + std::string(col));

  using Key = std::tuple<long, std::string, double, long>;
  std::map<Key, OptionQuote> dedup;
  std::vector<Key> order;

  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::size_t row = i + 2;  // 1-based, after header
    const auto& r = t.rows[i];
    if (r.size() != t.header.size())
      throw std::runtime_error("quotes csv: row " + std::to_string(row) + ": expected " +
                               std::to_string(t.header.size()) + " fields, got " +
                               std::to_string(r.size()));
    OptionQuote q;
    try {
      q.obs_date = Date::parse(r[t.column("obs_date")]);
      q.expiry_date = Date::parse(r[t.column("expiry_date")]);
    } catch (const std::exception& e) {
      throw std::runtime_error("quotes csv: row " + std::to_string(row) + ": " + e.what());
    }
    q.ticker = r[t.column("ticker")];
    find_fund(funds, q.ticker);  // unknown ticker -> error naming it
    q.strike = csv::to_double(r[t.column("strike")], "strike", row);
    const auto ttm_field = csv::to_optional_double(r[t.column("ttm_years")], "ttm_years", row);
    q.ttm = ttm_field ? *ttm_field
                      : static_cast<double>(q.expiry_date.serial() - q.obs_date.serial()) / 365.0;
    q.mid_price = csv::to_double(r[t.column("mid_price")], "mid_price", row);
    q.implied_vol = csv::to_double(r[t.column("implied_vol")], "implied_vol", row);
    q.underlying = csv::to_double(r[t.column("underlying")], "underlying", row);
    q.bid = csv::to_optional_double(r[t.column("bid")], "bid", row);
    q.ask = csv::to_optional_double(r[t.column("ask")], "ask", row);
    if (const auto& vs = r[t.column("volume")]; !vs.empty())
      q.volume = static_cast<long>(csv::to_double(vs, "volume", row));

    const auto fail = [row](const std::string& why) {
      throw std::runtime_error("quotes csv: row " + std::to_string(row) +
                               ": validation failed: " + why);
    };
    if (!(q.ttm > 0.0)) fail("ttm must be > 0");
    if (!(q.strike > 0.0)) fail("strike must be > 0");
    if (!(q.underlying > 0.0)) fail("underlying must be > 0");
    if (!(q.implied_vol > 0.0)) fail("implied_vol must be > 0");
    if (q.bid && q.ask) {
      if (*q.ask < *q.bid) fail("ask < bid");
      if (q.mid_price < *q.bid - 1e-12 || q.mid_price > *q.ask + 1e-12)
        fail("mid outside [bid, ask]");
    }

    const Key key{q.obs_date.serial(), q.ticker, q.strike, q.expiry_date.serial()};
    auto it = dedup.find(key);
    if (it == dedup.end()) {
      dedup.emplace(key, std::move(q));
      order.push_back(key);
    } else {
      const long have = it->second.volume.value_or(-1);
      const long incoming = q.volume.value_or(-1);
      if (incoming >= have) it->second = std::move(q);
    }
  }

  std::vector<OptionQuote> out;
  out.reserve(order.size());
  for (const auto& k : order) out.push_back(dedup.at(k));
  return out;
}

inline void write_quotes(const std::string& path, const std::vector<OptionQuote>& quotes,
                         const std::vector<std::string>& comment_lines = {}) {
  csv::Writer w(path);
  for (const auto& c : comment_lines) w.comment(c);
  w.row({"obs_date", "ticker", "strike", "expiry_date", "ttm_years", "mid_price",
         "implied_vol", "underlying", "bid", "ask", "volume"});
  for (const auto& q : quotes) {
    w.row({q.obs_date.iso(), q.ticker, csv::num(q.strike), q.expiry_date.iso(),
           csv::num(q.ttm), csv::num(q.mid_price), csv::num(q.implied_vol),
           csv::num(q.underlying), q.bid ? csv::num(*q.bid) : "",
           q.ask ? csv::num(*q.ask) : "", q.volume ? std::to_string(*q.volume) : ""});
  }
}

}  // namespace letflab
