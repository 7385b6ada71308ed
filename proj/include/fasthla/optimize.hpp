#pragma once

#include <span>
#include <string_view>

#include "fasthla/surface.hpp"
#include "fasthla/types.hpp"

namespace fasthla {

enum class Objective { efficiency, min_energy, max_throughput };
enum class OptMethod { grid, refined };

Objective parse_objective(std::string_view name);  // throws Errc::invalid_argument
std::string_view to_string(Objective o);

struct OptimizeOptions {
  Objective objective = Objective::efficiency;
  // Upper bound on cc * p; 0 disables the cap.
  int stream_cap = 0;
  int max_sweeps = 50;
  double rel_tol = 1e-6;
};

struct OptimizationResult {
  ParamSetting theta;
  double objective = 0;  // per the selected mode; efficiency = th / max(e, eps)
  double th_at = 0;
  double e_at = 0;
  OptMethod method = OptMethod::grid;
};

// Objective value of a surface point under `mode`. Larger is better.
double objective_value(const SurfaceValue& v, Objective mode);

// Exhaustive scan of the feasible lattice nodes inside the surface hull.
// Ties go to smaller cc, then p, then bs.
OptimizationResult grid_argmax(const PerfSurface& s, const OptimizeOptions& opt = {});

// Coordinate ascent with golden-section line search in log2 coordinates,
// snapped to the nearest lattice node. Never returns a node worse than start.
OptimizationResult refine(const PerfSurface& s, const ParamSetting& start,
                          const OptimizeOptions& opt = {});

// preprocess -> fit_surface -> grid_argmax -> refine. Logs without power data
// do not contribute. Throws Errc::insufficient_data when fewer than 4 usable
// logs remain or no axis spans two levels.
OptimizationResult optimal_params(std::span<const TransferLog> logs,
                                  const OptimizeOptions& opt = {});

}  // namespace fasthla
