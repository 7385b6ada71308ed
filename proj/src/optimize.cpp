#include "fasthla/optimize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "fasthla/error.hpp"
#include "fasthla/logs.hpp"

namespace fasthla {

Objective parse_objective(std::string_view name) {
  if (name == "efficiency") return Objective::efficiency;
  if (name == "min_energy") return Objective::min_energy;
  if (name == "max_throughput") return Objective::max_throughput;
  throw Error(Errc::invalid_argument, "unknown objective '" + std::string(name) + "'");
}

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::efficiency: return "efficiency";
    case Objective::min_energy: return "min_energy";
    case Objective::max_throughput: return "max_throughput";
  }
  return "efficiency";
}

double objective_value(const SurfaceValue& v, Objective mode) {
  switch (mode) {
    case Objective::efficiency: return v.th / std::max(v.e, kEnergyFloor);
    case Objective::min_energy: return -std::max(v.e, kEnergyFloor);
    case Objective::max_throughput: return v.th;
  }
  return 0;
}

namespace {

bool within_cap(const ParamSetting& t, const OptimizeOptions& opt) {
  return opt.stream_cap <= 0 || t.cc * t.p <= opt.stream_cap;
}

OptimizationResult result_at(const PerfSurface& s, const ParamSetting& t,
                             const OptimizeOptions& opt, OptMethod method) {
  const auto v = s.eval(t);
  return {t, objective_value(v, opt.objective), v.th, v.e, method};
}

}  // namespace

OptimizationResult grid_argmax(const PerfSurface& s, const OptimizeOptions& opt) {
  const auto nodes = s.lattice_in_hull();
  std::vector<OptimizationResult> scored;
  scored.reserve(nodes.size());
  for (const auto& t : nodes) {
    if (within_cap(t, opt)) scored.push_back(result_at(s, t, opt, OptMethod::grid));
  }
  if (scored.empty()) {
    throw Error(Errc::insufficient_data, "no lattice node satisfies the stream cap");
  }
  // nodes are ordered by cc, p, bs; keep the first maximum.
  const OptimizationResult* best = &scored.front();
  for (const auto& r : scored)
    if (r.objective > best->objective) best = &r;
  return *best;
}

OptimizationResult refine(const PerfSurface& s, const ParamSetting& start,
                          const OptimizeOptions& opt) {
  const auto start_result = result_at(s, start, opt, OptMethod::refined);
  std::array<double, 3> x{static_cast<double>(start.cc_level()),
                          static_cast<double>(start.p_level()),
                          static_cast<double>(start.bs_level())};
  std::array<double, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = s.axis(a).front();
    hi[a] = s.axis(a).back();
  }
  auto f = [&](const std::array<double, 3>& q) -> double {
    if (opt.stream_cap > 0 && std::exp2(q[0] + q[1]) > opt.stream_cap + 1e-9)
      return -INFINITY;
    return objective_value(s.eval_log(q[0], q[1], q[2]), opt.objective);
  };

  constexpr double kInvPhi = 0.6180339887498949;
  double current = f(x);
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    const double before = current;
    for (int a = 0; a < 3; ++a) {
      if (hi[a] <= lo[a]) continue;
      double l = lo[a], r = hi[a];
      auto probe = x;
      auto at = [&](double v) {
        probe[a] = v;
        return f(probe);
      };
      double c = r - kInvPhi * (r - l), d = l + kInvPhi * (r - l);
      double fc = at(c), fd = at(d);
      while (r - l > 1e-7) {
        if (fc >= fd) {
          r = d;
          d = c;
          fd = fc;
          c = r - kInvPhi * (r - l);
          fc = at(c);
        } else {
          l = c;
          c = d;
          fc = fd;
          d = l + kInvPhi * (r - l);
          fd = at(d);
        }
      }
      const double cand = 0.5 * (l + r);
      const double fcand = at(cand);
      if (fcand > current) {
        x[a] = cand;
        current = fcand;
      }
    }
    if (std::abs(current - before) <= opt.rel_tol * std::max(std::abs(before), 1e-300))
      break;
  }

  const ParamSetting snapped = ParamSetting::from_levels(
      static_cast<int>(std::lround(std::clamp(x[0], lo[0], hi[0]))),
      static_cast<int>(std::lround(std::clamp(x[1], lo[1], hi[1]))),
      static_cast<int>(std::lround(std::clamp(x[2], lo[2], hi[2]))));
  if (!within_cap(snapped, opt)) return start_result;
  auto snapped_result = result_at(s, snapped, opt, OptMethod::refined);
  return snapped_result.objective > start_result.objective ? snapped_result
                                                            : start_result;
}

OptimizationResult optimal_params(std::span<const TransferLog> logs,
                                  const OptimizeOptions& opt) {
  const auto clean = preprocess_logs(logs);
  std::vector<PerfSample> samples;
  for (const auto& l : clean) {
    if (auto e = energy_per_100mb(l)) samples.push_back({l.params, l.throughput, *e});
  }
  if (samples.size() < 4) {
    throw Error(Errc::insufficient_data,
                "need at least 4 usable logs, have " + std::to_string(samples.size()));
  }
  std::array<bool, 3> spans{};
  for (const auto& smp : samples) {
    spans[0] |= smp.theta.cc != samples.front().theta.cc;
    spans[1] |= smp.theta.p != samples.front().theta.p;
    spans[2] |= smp.theta.bs != samples.front().theta.bs;
  }
  if (!spans[0] && !spans[1] && !spans[2]) {
    throw Error(Errc::insufficient_data,
                "no axis spans two levels (degenerate axes: cc, p, bs)");
  }
  const auto surface = fit_surface(samples);
  const auto coarse = grid_argmax(surface, opt);
  return refine(surface, coarse.theta, opt);
}

}  // namespace fasthla
