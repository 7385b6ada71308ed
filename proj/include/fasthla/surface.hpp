#pragma once

#include <array>
#include <span>
#include <vector>

#include "fasthla/spline.hpp"
#include "fasthla/types.hpp"

namespace fasthla {

inline constexpr double kEnergyFloor = 1e-6;

struct PerfSample {
  ParamSetting theta;
  double th = 0;  // Mbps
  double e = 0;   // J per 100 MB
};

struct SurfaceValue {
  double th = 0;
  double e = 0;
};

// Throughput and energy over (cc, p, bs), interpolated by successive 1D
// natural cubic splines in log2 coordinates: x = log2 cc, y = log2 p,
// z = log2(bs / 1 KiB). Axes hold the levels present in the samples; an axis
// with a single level is constant. Nodes of the level product that had no
// sample are filled before fitting (see fit_surface).
class PerfSurface {
 public:
  // Level coordinates per axis (log2 units), ascending.
  const std::vector<double>& axis(int a) const { return axes_.at(a); }

  // Grid value at level indices (i over cc, j over p, k over bs).
  double th_at(std::size_t i, std::size_t j, std::size_t k) const {
    return th_[index(i, j, k)];
  }
  double e_at(std::size_t i, std::size_t j, std::size_t k) const {
    return e_[index(i, j, k)];
  }

  // Raw parameter values; e clamped below at kEnergyFloor.
  // Throws Errc::extrapolation outside the axis hulls.
  SurfaceValue eval(double cc, double p, double bs) const;
  SurfaceValue eval(const ParamSetting& theta) const;

  // Same, in log2 coordinates.
  SurfaceValue eval_log(double x, double y, double z) const;
  // Without the energy clamp.
  SurfaceValue eval_log_raw(double x, double y, double z) const;

  bool in_hull_log(double x, double y, double z) const;

  // Feasible lattice settings whose coordinates lie inside the hull.
  std::vector<ParamSetting> lattice_in_hull() const;

 private:
  friend PerfSurface fit_surface(std::span<const PerfSample> samples);

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * axes_[1].size() + j) * axes_[2].size() + k;
  }
  double interpolate(const std::vector<double>& grid,
                     const std::vector<CubicSpline1D>& cc_lines, double x,
                     double y, double z) const;
  void build_lines();

  std::array<std::vector<double>, 3> axes_;
  std::vector<double> th_;
  std::vector<double> e_;
  // Splines along cc for every (p, bs) line, index j * nz + k.
  std::vector<CubicSpline1D> th_lines_;
  std::vector<CubicSpline1D> e_lines_;
};

// Averages duplicate settings, then fills missing nodes of the level product
// by 1D natural-spline interpolation along cc, then p, then bs (repeated until
// nothing changes). Nodes outside every line's sampled hull are filled by
// nearest-level constant extension along the same axis order.
// Throws Errc::insufficient_data on an empty sample set and Errc::domain for
// settings off the lattice.
PerfSurface fit_surface(std::span<const PerfSample> samples);

inline SurfaceValue eval_surface(const PerfSurface& s, double cc, double p,
                                 double bs) {
  return s.eval(cc, p, bs);
}

}  // namespace fasthla
