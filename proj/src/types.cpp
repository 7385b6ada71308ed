#include "fasthla/types.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "fasthla/error.hpp"

namespace fasthla {

namespace {

template <std::size_t N>
bool contains(const std::array<int, N>& levels, int v) {
  return std::find(levels.begin(), levels.end(), v) != levels.end();
}

template <std::size_t N>
int level_of(const std::array<int, N>& levels, int v, const char* axis) {
  auto it = std::find(levels.begin(), levels.end(), v);
  if (it == levels.end()) {
    throw Error(Errc::domain, std::string(axis) + " value " +
                                  std::to_string(v) + " is not a lattice level");
  }
  return static_cast<int>(it - levels.begin());
}

}  // namespace

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::domain: return "domain";
    case Errc::empty_trace: return "empty-trace";
    case Errc::malformed_trace: return "malformed-trace";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::duplicate_knot: return "duplicate-knot";
    case Errc::extrapolation: return "extrapolation";
    case Errc::scenario: return "scenario";
    case Errc::undefined_variance: return "undefined-variance";
    case Errc::empty_plan: return "empty-plan";
    case Errc::insufficient_window: return "insufficient-window";
    case Errc::bad_magic: return "bad-magic";
    case Errc::wrong_count: return "wrong-count";
    case Errc::truncated: return "truncated";
    case Errc::empty_input: return "empty-input";
    case Errc::no_trainable_data: return "no-trainable-data";
    case Errc::parse: return "parse";
    case Errc::io: return "io";
    case Errc::transfer: return "transfer";
  }
  return "unknown";
}

bool ParamSetting::is_feasible() const noexcept {
  return contains(kCcLevels, cc) && contains(kPLevels, p) &&
         contains(kBsLevels, bs);
}

int ParamSetting::cc_level() const { return level_of(kCcLevels, cc, "cc"); }
int ParamSetting::p_level() const { return level_of(kPLevels, p, "p"); }
int ParamSetting::bs_level() const { return level_of(kBsLevels, bs, "bs"); }

ParamSetting ParamSetting::from_levels(int cc_level, int p_level, int bs_level) {
  if (cc_level < 0 || cc_level >= static_cast<int>(kCcLevels.size()) ||
      p_level < 0 || p_level >= static_cast<int>(kPLevels.size()) ||
      bs_level < 0 || bs_level >= static_cast<int>(kBsLevels.size())) {
    throw Error(Errc::domain, "level index out of range");
  }
  return {kCcLevels[cc_level], kPLevels[p_level], kBsLevels[bs_level]};
}

std::string to_string(const ParamSetting& theta) {
  return "(cc=" + std::to_string(theta.cc) + ", p=" + std::to_string(theta.p) +
         ", bs=" + std::to_string(theta.bs / 1024) + "KB)";
}

std::vector<ParamSetting> full_lattice() {
  std::vector<ParamSetting> out;
  out.reserve(kLatticeSize);
  for (int cc : kCcLevels)
    for (int p : kPLevels)
      for (int bs : kBsLevels) out.push_back({cc, p, bs});
  return out;
}

std::optional<double> energy_per_100mb(const TransferLog& log) {
  if (!log.pw) return std::nullopt;
  const double bytes = log.fs * log.n_files;
  if (!(bytes > 0)) return std::nullopt;
  return *log.pw * log.duration * 1e8 / bytes;
}

}  // namespace fasthla
