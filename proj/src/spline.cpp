#include "fasthla/spline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fasthla/error.hpp"

namespace fasthla {

CubicSpline1D CubicSpline1D::fit(std::span<const double> xs,
                                 std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(Errc::invalid_argument, "x and y differ in length");
  }
  std::vector<std::pair<double, double>> pts(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) pts[i] = {xs[i], ys[i]};
  return fit(pts);
}

CubicSpline1D CubicSpline1D::fit(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) {
    throw Error(Errc::insufficient_data, "spline needs at least 2 points");
  }
  std::vector<std::pair<double, double>> pts(points.begin(), points.end());
  for (const auto& [x, y] : pts) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw Error(Errc::invalid_argument, "spline points must be finite");
    }
  }
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].first == pts[i - 1].first) {
      throw Error(Errc::duplicate_knot,
                  "duplicate knot at x=" + std::to_string(pts[i].first));
    }
  }

  CubicSpline1D s;
  const std::size_t n = pts.size();
  s.knots_.resize(n);
  s.values_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.knots_[i] = pts[i].first;
    s.values_[i] = pts[i].second;
  }
  const auto& x = s.knots_;
  const auto& y = s.values_;

  std::vector<double> h(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) h[i] = x[i + 1] - x[i];

  // Second derivatives m; natural ends m[0] = m[n-1] = 0. Interior rows:
  //   h[i-1] m[i-1] + 2 (h[i-1] + h[i]) m[i] + h[i] m[i+1]
  //     = 6 ((y[i+1]-y[i])/h[i] - (y[i]-y[i-1])/h[i-1])
  // solved by the Thomas algorithm (diagonally dominant, no pivoting needed).
  std::vector<double> m(n, 0.0);
  if (n > 2) {
    const std::size_t k = n - 2;
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t i = r + 1;
      diag[r] = 2.0 * (h[i - 1] + h[i]);
      upper[r] = h[i];
      rhs[r] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    for (std::size_t r = 1; r < k; ++r) {
      const double w = h[r] / diag[r - 1];  // sub-diagonal of row r is h[r]
      diag[r] -= w * upper[r - 1];
      rhs[r] -= w * rhs[r - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t r = k - 1; r-- > 0;) {
      m[r + 1] = (rhs[r] - upper[r] * m[r + 2]) / diag[r];
    }
  }

  s.coeffs_.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    s.coeffs_[i] = {y[i],
                    (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0,
                    m[i] / 2.0, (m[i + 1] - m[i]) / (6.0 * h[i])};
  }
  return s;
}

std::size_t CubicSpline1D::piece_of(double x) const {
  if (!(x >= knots_.front() && x <= knots_.back())) {
    throw Error(Errc::extrapolation, "x=" + std::to_string(x) +
                                         " outside spline range [" +
                                         std::to_string(knots_.front()) + ", " +
                                         std::to_string(knots_.back()) + "]");
  }
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  auto idx = static_cast<std::size_t>(it - knots_.begin());
  return std::min(idx == 0 ? 0 : idx - 1, coeffs_.size() - 1);
}

double CubicSpline1D::operator()(double x) const {
  const auto i = piece_of(x);
  if (x == knots_.back()) return values_.back();
  const auto& c = coeffs_[i];
  const double t = x - knots_[i];
  return c[0] + t * (c[1] + t * (c[2] + t * c[3]));
}

double CubicSpline1D::derivative(double x, int order) const {
  const auto i = piece_of(x);
  const auto& c = coeffs_[i];
  const double t = x - knots_[i];
  switch (order) {
    case 0: return c[0] + t * (c[1] + t * (c[2] + t * c[3]));
    case 1: return c[1] + t * (2.0 * c[2] + 3.0 * t * c[3]);
    case 2: return 2.0 * c[2] + 6.0 * t * c[3];
    case 3: return 6.0 * c[3];
    default: return 0.0;
  }
}

double CubicSpline1D::piece_second_derivative(std::size_t piece, double t) const {
  const auto& c = coeffs_.at(piece);
  return 2.0 * c[2] + 6.0 * t * c[3];
}

}  // namespace fasthla
