#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace letflab::dsfm {

/// Tensor B-spline basis specification. Knot vectors carry full end
/// multiplicity; the basis counts follow the Schoenberg-Whitney relation
/// U = M - order_m, V = N - order_t, K = U * V.
struct BasisSpec {
  int order_m = 3;  // spline order (degree + 1), moneyness axis
  int order_t = 3;  // spline order, maturity axis
  std::vector<double> knots_m;
  std::vector<double> knots_t;

  int num_m() const { return static_cast<int>(knots_m.size()) - order_m; }
  int num_t() const { return static_cast<int>(knots_t.size()) - order_t; }
  int dim() const { return num_m() * num_t(); }

  void validate() const {
    if (order_m < 1 || order_t < 1) throw std::domain_error("basis: order must be >= 1");
    if (num_m() < 1 || num_t() < 1)
      throw std::domain_error("basis: need more knots than the order on each axis");
    for (const auto* ks : {&knots_m, &knots_t}) {
      for (std::size_t i = 1; i < ks->size(); ++i)
        if ((*ks)[i] < (*ks)[i - 1]) throw std::domain_error("basis: knots must be nondecreasing");
    }
    const auto end_mult = [](const std::vector<double>& ks, int order) {
      int lo = 1, hi = 1;
      while (lo < static_cast<int>(ks.size()) && ks[lo] == ks.front()) ++lo;
      while (hi < static_cast<int>(ks.size()) && ks[ks.size() - 1 - hi] == ks.back()) ++hi;
      return lo >= order && hi >= order;
    };
    if (!end_mult(knots_m, order_m) || !end_mult(knots_t, order_t))
      throw std::domain_error("basis: end knots need full multiplicity");
  }

  /// Clamped knots with equidistant interior sites on [lo, hi].
  static std::vector<double> clamped_uniform(int order, int total_knots, double lo, double hi) {
    if (total_knots < 2 * order) throw std::domain_error("basis: too few knots for the order");
    std::vector<double> ks;
    const int interior = total_knots - 2 * order;
    for (int i = 0; i < order; ++i) ks.push_back(lo);
    for (int i = 1; i <= interior; ++i)
      ks.push_back(lo + (hi - lo) * static_cast<double>(i) / (interior + 1));
    for (int i = 0; i < order; ++i) ks.push_back(hi);
    return ks;
  }

  static BasisSpec uniform(int order_m, int m_knots, int order_t, int t_knots) {
    BasisSpec b;
    b.order_m = order_m;
    b.order_t = order_t;
    b.knots_m = clamped_uniform(order_m, m_knots, 0.0, 1.0);
    b.knots_t = clamped_uniform(order_t, t_knots, 0.0, 1.0);
    b.validate();
    return b;
  }

  /// Clamped knots with interior sites at equidistant quantiles of the data.
  static std::vector<double> clamped_quantile(int order, int total_knots,
                                              std::vector<double> data) {
    if (data.empty()) throw std::invalid_argument("basis: no data for quantile knots");
    std::sort(data.begin(), data.end());
    const int interior = total_knots - 2 * order;
    std::vector<double> ks;
    for (int i = 0; i < order; ++i) ks.push_back(data.front());
    for (int i = 1; i <= interior; ++i) {
      const double q = static_cast<double>(i) / (interior + 1);
      const double pos = q * (data.size() - 1);
      const std::size_t j = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(j);
      const double v = j + 1 < data.size() ? data[j] * (1.0 - frac) + data[j + 1] * frac
                                           : data.back();
      ks.push_back(v);
    }
    for (int i = 0; i < order; ++i) ks.push_back(data.back());
    return ks;
  }
};

namespace detail {

/// Nonzero B-spline values at x (Cox-de Boor); writes `order` values into out
/// and returns the index of the first nonzero basis function.
inline int basis_at(const std::vector<double>& knots, int order, double x, double* out) {
  const int p = order - 1;               // degree
  const int nbasis = static_cast<int>(knots.size()) - order;
  const double lo = knots.front(), hi = knots.back();
  if (x < lo || x > hi) throw std::domain_error("bspline: point outside the knot span");

  // span index: largest i with knots[i] <= x < knots[i+1], clamped for x = hi
  int span = p;
  if (x >= hi) {
    span = nbasis - 1;
  } else {
    span = static_cast<int>(std::upper_bound(knots.begin(), knots.end(), x) - knots.begin()) - 1;
    span = std::min(std::max(span, p), nbasis - 1);
  }

  double left[16], right[16];
  if (order > 16) throw std::domain_error("bspline: order too large");
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
  return span - p;
}

}  // namespace detail

/// One evaluation point of the tensor basis: the K-vector psi(x_m, x_t).
inline void tensor_row(const BasisSpec& basis, double x_m, double x_t,
                       Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  row.setZero();
  double bm[16], bt[16];
  const int im = detail::basis_at(basis.knots_m, basis.order_m, x_m, bm);
  const int it = detail::basis_at(basis.knots_t, basis.order_t, x_t, bt);
  const int v = basis.num_t();
  for (int a = 0; a < basis.order_m; ++a)
    for (int b = 0; b < basis.order_t; ++b)
      row((im + a) * v + (it + b)) = bm[a] * bt[b];
}

/// Design matrix of the tensor basis over a point list.
inline Eigen::MatrixXd tensor_design(const std::vector<std::pair<double, double>>& points,
                                     const BasisSpec& basis) {
  basis.validate();
  Eigen::MatrixXd design(points.size(), basis.dim());
  for (std::size_t i = 0; i < points.size(); ++i)
    tensor_row(basis, points[i].first, points[i].second, design.row(i));
  return design;
}

}  // namespace letflab::dsfm
