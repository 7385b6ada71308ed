#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fasthla {

inline constexpr std::array<int, 6> kCcLevels{1, 2, 4, 8, 16, 32};
inline constexpr std::array<int, 6> kPLevels{1, 2, 4, 8, 16, 32};
inline constexpr std::array<int, 7> kBsLevels{1024,      2 * 1024,  4 * 1024,
                                              8 * 1024,  16 * 1024, 32 * 1024,
                                              64 * 1024};
inline constexpr int kLatticeSize = 6 * 6 * 7;

// Application-layer transfer knobs. The feasible domain is the power-of-two
// lattice above; values outside it are representable (schedule scaling and
// user overrides produce them) and is_feasible() reports membership.
struct ParamSetting {
  int cc = 1;
  int p = 1;
  int bs = 8 * 1024;

  bool is_feasible() const noexcept;

  // Level index on each axis: log2(cc), log2(p), log2(bs / 1 KiB).
  int cc_level() const;
  int p_level() const;
  int bs_level() const;

  static ParamSetting from_levels(int cc_level, int p_level, int bs_level);

  friend bool operator==(const ParamSetting&, const ParamSetting&) = default;
};

std::string to_string(const ParamSetting& theta);

// All 252 feasible settings, ordered by cc, then p, then bs.
std::vector<ParamSetting> full_lattice();

enum class NetIf { wifi, cellular };
enum class TransferStatus { completed, aborted, failed };

struct DeviceInfo {
  std::string model;
  std::string os;
  int cpu_class = 0;
  std::uint64_t mem_bytes = 0;
  std::string wifi_std;

  friend bool operator==(const DeviceInfo&, const DeviceInfo&) = default;
};

struct TransferLog {
  double fs = 0;          // mean file size, bytes
  double n_files = 0;
  double t_rtt = 0;       // ms
  double bs_tcp = 0;      // bytes
  double bw = 0;          // Mbps
  ParamSetting params;
  double mu_cpu = 0;
  double mu_mem = 0;
  double mu_nic = 0;
  std::optional<double> pw;  // mean dynamic power, W; absent without a trace
  double throughput = 0;     // Mbps
  double duration = 0;       // s
  DeviceInfo device;
  NetIf net_if = NetIf::wifi;
  TransferStatus status = TransferStatus::completed;
  std::int64_t timestamp = 0;

  friend bool operator==(const TransferLog&, const TransferLog&) = default;
};

// Dynamic energy normalized to 100 MB (1e8 bytes) of payload.
// Requires pw; returns nullopt when the log carries no power data.
std::optional<double> energy_per_100mb(const TransferLog& log);

struct PowerSample {
  double t = 0;      // s
  double watts = 0;
};

struct PowerTrace {
  std::vector<PowerSample> samples;
  double p_base = 0;
  std::pair<double, double> window{0, 0};
};

struct EnergyBreakdown {
  double e_total = 0;
  double e_base = 0;
  double e_dynamic = 0;
};

}  // namespace fasthla
