#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace fasthla {

// Natural cubic spline. Piece i covers [knots[i], knots[i+1]] and is stored in
// the local basis  f_i(x) = c0 + c1 t + c2 t^2 + c3 t^3,  t = x - knots[i].
class CubicSpline1D {
 public:
  using Coeffs = std::array<double, 4>;

  // Points may arrive unsorted. Throws Errc::insufficient_data (< 2 points),
  // Errc::duplicate_knot, or Errc::invalid_argument for non-finite input.
  static CubicSpline1D fit(std::span<const std::pair<double, double>> points);
  static CubicSpline1D fit(std::span<const double> xs, std::span<const double> ys);

  // Throws Errc::extrapolation outside [front knot, back knot].
  double operator()(double x) const;
  double derivative(double x, int order) const;

  // One-sided second derivative of piece `piece` at local offset t.
  double piece_second_derivative(std::size_t piece, double t) const;

  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<Coeffs>& coeffs() const noexcept { return coeffs_; }

  // Index of the piece containing x (the left piece at an interior knot is
  // never chosen; x == knot k evaluates piece k, except for the last knot).
  std::size_t piece_of(double x) const;

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
  std::vector<Coeffs> coeffs_;
};

// Free-function spellings.
inline CubicSpline1D fit_cubic(std::span<const std::pair<double, double>> points) {
  return CubicSpline1D::fit(points);
}
inline double eval_spline(const CubicSpline1D& s, double x) { return s(x); }

}  // namespace fasthla
