#pragma once

#include "fasthla/types.hpp"

namespace fasthla {

// Trapezoidal integral of max(P(t) - p_base, 0) over the trace.
// Throws Errc::empty_trace (< 2 samples) or Errc::malformed_trace.
double dynamic_energy(const PowerTrace& trace);

// E_t = E_b + E_d. Throws Errc::domain on negative inputs.
EnergyBreakdown total_energy(double e_base, double e_dynamic);

// p_base times the window length.
double base_energy(const PowerTrace& trace);

// Checks trace invariants without integrating.
void validate_trace(const PowerTrace& trace);

}  // namespace fasthla
