#include "fasthla/surface.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "fasthla/error.hpp"

namespace fasthla {

namespace {

constexpr double kHullTol = 1e-12;

double clamp_into(const std::vector<double>& axis, double v, const char* name) {
  if (v < axis.front() - kHullTol || v > axis.back() + kHullTol || std::isnan(v)) {
    throw Error(Errc::extrapolation,
                std::string(name) + " coordinate " + std::to_string(v) +
                    " outside fitted hull [" + std::to_string(axis.front()) + ", " +
                    std::to_string(axis.back()) + "]");
  }
  return std::clamp(v, axis.front(), axis.back());
}

double spline_at(const std::vector<double>& xs, const std::vector<double>& ys,
                 double x) {
  return CubicSpline1D::fit(xs, ys)(x);
}

// Node grid with NaN marking missing nodes.
struct Grid {
  std::array<std::size_t, 3> n;
  std::vector<double> v;

  std::size_t at(std::array<std::size_t, 3> c) const {
    return (c[0] * n[1] + c[1]) * n[2] + c[2];
  }
};

// One pass over every line along `axis`. With `spline` set, missing nodes
// inside the known hull of a line are interpolated; otherwise missing nodes
// take the nearest known value on the line. Returns whether anything changed.
bool fill_along(Grid& g, const std::vector<double>& coords, int axis, bool spline) {
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  bool changed = false;
  for (std::size_t u = 0; u < g.n[a1]; ++u) {
    for (std::size_t w = 0; w < g.n[a2]; ++w) {
      std::array<std::size_t, 3> c{};
      c[a1] = u;
      c[a2] = w;
      std::vector<std::size_t> known;
      std::vector<double> kx, ky;
      for (std::size_t t = 0; t < g.n[axis]; ++t) {
        c[axis] = t;
        const double v = g.v[g.at(c)];
        if (!std::isnan(v)) {
          known.push_back(t);
          kx.push_back(coords[t]);
          ky.push_back(v);
        }
      }
      if (known.empty() || known.size() == g.n[axis]) continue;
      if (spline && known.size() < 2) continue;
      std::vector<std::pair<std::size_t, double>> fills;
      for (std::size_t t = 0; t < g.n[axis]; ++t) {
        c[axis] = t;
        if (!std::isnan(g.v[g.at(c)])) continue;
        if (spline) {
          if (t < known.front() || t > known.back()) continue;
          fills.emplace_back(t, spline_at(kx, ky, coords[t]));
        } else {
          std::size_t best = known.front();
          for (auto k : known) {
            const auto dk = k > t ? k - t : t - k;
            const auto db = best > t ? best - t : t - best;
            if (dk < db) best = k;
          }
          c[axis] = best;
          fills.emplace_back(t, g.v[g.at(c)]);
        }
      }
      for (const auto& [t, val] : fills) {
        c[axis] = t;
        g.v[g.at(c)] = val;
        changed = true;
      }
    }
  }
  return changed;
}

bool any_missing(const Grid& g) {
  return std::any_of(g.v.begin(), g.v.end(), [](double v) { return std::isnan(v); });
}

void fill_grid(Grid& g, const std::array<std::vector<double>, 3>& axes) {
  while (any_missing(g)) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (int a = 0; a < 3; ++a) changed |= fill_along(g, axes[a], a, true);
    }
    for (int a = 0; a < 3 && any_missing(g); ++a) {
      if (fill_along(g, axes[a], a, false)) break;
    }
  }
}

}  // namespace

PerfSurface fit_surface(std::span<const PerfSample> samples) {
  if (samples.empty()) {
    throw Error(Errc::insufficient_data, "surface fit needs at least one sample");
  }
  std::array<std::set<int>, 3> levels;
  std::map<std::array<int, 3>, std::array<double, 3>> sums;  // th, e, count
  for (const auto& s : samples) {
    if (!s.theta.is_feasible()) {
      throw Error(Errc::domain, "sample setting off the lattice: " + to_string(s.theta));
    }
    if (!std::isfinite(s.th) || !std::isfinite(s.e)) {
      throw Error(Errc::invalid_argument, "sample values must be finite");
    }
    const std::array<int, 3> key{s.theta.cc_level(), s.theta.p_level(),
                                 s.theta.bs_level()};
    for (int a = 0; a < 3; ++a) levels[a].insert(key[a]);
    auto& acc = sums[key];
    acc[0] += s.th;
    acc[1] += s.e;
    acc[2] += 1;
  }

  PerfSurface surf;
  std::array<std::map<int, std::size_t>, 3> pos;
  for (int a = 0; a < 3; ++a) {
    for (int lvl : levels[a]) {
      pos[a][lvl] = surf.axes_[a].size();
      surf.axes_[a].push_back(static_cast<double>(lvl));
    }
  }
  const std::array<std::size_t, 3> n{surf.axes_[0].size(), surf.axes_[1].size(),
                                     surf.axes_[2].size()};
  Grid th{n, std::vector<double>(n[0] * n[1] * n[2], std::nan(""))};
  Grid e = th;
  for (const auto& [key, acc] : sums) {
    const auto idx = th.at({pos[0][key[0]], pos[1][key[1]], pos[2][key[2]]});
    th.v[idx] = acc[0] / acc[2];
    e.v[idx] = acc[1] / acc[2];
  }
  fill_grid(th, surf.axes_);
  fill_grid(e, surf.axes_);
  surf.th_ = std::move(th.v);
  surf.e_ = std::move(e.v);
  surf.build_lines();
  return surf;
}

void PerfSurface::build_lines() {
  th_lines_.clear();
  e_lines_.clear();
  if (axes_[0].size() < 2) return;
  const std::size_t nx = axes_[0].size(), ny = axes_[1].size(), nz = axes_[2].size();
  std::vector<double> tv(nx), ev(nx);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t k = 0; k < nz; ++k) {
      for (std::size_t i = 0; i < nx; ++i) {
        tv[i] = th_[index(i, j, k)];
        ev[i] = e_[index(i, j, k)];
      }
      th_lines_.push_back(CubicSpline1D::fit(axes_[0], tv));
      e_lines_.push_back(CubicSpline1D::fit(axes_[0], ev));
    }
  }
}

double PerfSurface::interpolate(const std::vector<double>& grid,
                                const std::vector<CubicSpline1D>& cc_lines,
                                double x, double y, double z) const {
  const std::size_t nx = axes_[0].size(), ny = axes_[1].size(), nz = axes_[2].size();
  std::vector<double> along_p(ny), along_bs(nz);
  for (std::size_t k = 0; k < nz; ++k) {
    for (std::size_t j = 0; j < ny; ++j) {
      along_p[j] = nx > 1 ? cc_lines[j * nz + k](x) : grid[index(0, j, k)];
    }
    along_bs[k] = ny > 1 ? spline_at(axes_[1], along_p, y) : along_p[0];
  }
  return nz > 1 ? spline_at(axes_[2], along_bs, z) : along_bs[0];
}

bool PerfSurface::in_hull_log(double x, double y, double z) const {
  const std::array<double, 3> v{x, y, z};
  for (int a = 0; a < 3; ++a) {
    if (!(v[a] >= axes_[a].front() - kHullTol && v[a] <= axes_[a].back() + kHullTol))
      return false;
  }
  return true;
}

SurfaceValue PerfSurface::eval_log_raw(double x, double y, double z) const {
  x = clamp_into(axes_[0], x, "cc");
  y = clamp_into(axes_[1], y, "p");
  z = clamp_into(axes_[2], z, "bs");
  return {interpolate(th_, th_lines_, x, y, z), interpolate(e_, e_lines_, x, y, z)};
}

SurfaceValue PerfSurface::eval_log(double x, double y, double z) const {
  auto v = eval_log_raw(x, y, z);
  v.e = std::max(v.e, kEnergyFloor);
  return v;
}

SurfaceValue PerfSurface::eval(double cc, double p, double bs) const {
  if (!(cc > 0 && p > 0 && bs > 0)) {
    throw Error(Errc::extrapolation, "parameters must be positive");
  }
  return eval_log(std::log2(cc), std::log2(p), std::log2(bs / 1024.0));
}

SurfaceValue PerfSurface::eval(const ParamSetting& theta) const {
  return eval_log(theta.cc_level(), theta.p_level(), theta.bs_level());
}

std::vector<ParamSetting> PerfSurface::lattice_in_hull() const {
  std::vector<ParamSetting> out;
  for (int i = static_cast<int>(axes_[0].front()); i <= static_cast<int>(axes_[0].back()); ++i)
    for (int j = static_cast<int>(axes_[1].front()); j <= static_cast<int>(axes_[1].back()); ++j)
      for (int k = static_cast<int>(axes_[2].front()); k <= static_cast<int>(axes_[2].back()); ++k)
        out.push_back(ParamSetting::from_levels(i, j, k));
  return out;
}

}  // namespace fasthla
