#include "fasthla/energy.hpp"

#include <algorithm>
#include <cmath>

#include "fasthla/error.hpp"

namespace fasthla {

void validate_trace(const PowerTrace& trace) {
  const auto& s = trace.samples;
  if (s.size() < 2) {
    throw Error(Errc::empty_trace, "power trace needs at least 2 samples");
  }
  if (!(trace.p_base >= 0) || !std::isfinite(trace.p_base)) {
    throw Error(Errc::malformed_trace, "base power must be finite and >= 0");
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i].t) || !std::isfinite(s[i].watts) || s[i].watts < 0) {
      throw Error(Errc::malformed_trace,
                  "sample " + std::to_string(i) + " is not finite or negative");
    }
    if (i > 0 && !(s[i].t > s[i - 1].t)) {
      throw Error(Errc::malformed_trace,
                  "timestamps not strictly increasing at sample " +
                      std::to_string(i));
    }
  }
  if (trace.window.first > s.front().t || trace.window.second < s.back().t) {
    throw Error(Errc::malformed_trace, "window does not cover all samples");
  }
}

double dynamic_energy(const PowerTrace& trace) {
  validate_trace(trace);
  const auto& s = trace.samples;
  double joules = 0;
  double prev = std::max(s.front().watts - trace.p_base, 0.0);
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double cur = std::max(s[i].watts - trace.p_base, 0.0);
    joules += 0.5 * (prev + cur) * (s[i].t - s[i - 1].t);
    prev = cur;
  }
  return joules;
}

double base_energy(const PowerTrace& trace) {
  return trace.p_base * (trace.window.second - trace.window.first);
}

EnergyBreakdown total_energy(double e_base, double e_dynamic) {
  if (!(e_base >= 0) || !(e_dynamic >= 0)) {
    throw Error(Errc::domain, "energy components must be non-negative");
  }
  return {e_base + e_dynamic, e_base, e_dynamic};
}

}  // namespace fasthla
