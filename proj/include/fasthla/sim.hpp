#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fasthla/learn.hpp"
#include "fasthla/types.hpp"

// Closed-form network and power model used as ground truth in tests and for
// synthetic log generation. simulate() is a pure function; noise only enters
// generate_logs().
namespace fasthla::sim {

struct NetScenario {
  double bw_cap = 100.0;      // Mbps
  double rtt = 100.0;         // ms
  double window = 64000.0;    // bytes
  double knee = 16.0;         // streams before congestion
  double slope = 0.02;        // per-stream penalty past the knee
  std::uint64_t seed = 0;
};

struct PowerModel {
  double p_base = 2.0;    // W
  double a = 0.05;        // W per stream
  double b = 1.5;         // W at full link utilization
};

struct SimResult {
  double throughput = 0;    // steady-state Mbps
  double wall_time = 0;     // s, includes per-file setup
  double e_per_100mb = 0;   // dynamic J per 1e8 bytes
  double dynamic_power = 0; // W above base
  PowerTrace trace;         // 1 Hz samples over [0, wall_time]
};

// Throws Errc::scenario for bw_cap <= 0 or other invalid constants, and
// Errc::invalid_argument for an empty dataset or non-positive parameters.
SimResult simulate(const NetScenario& scn, const PowerModel& pm,
                   const ParamSetting& theta, std::span<const double> sizes,
                   bool emit_trace = true);

// Efficiency th / e of a simulated transfer.
double efficiency(const SimResult& r);

enum class DatasetClass { html, image, video };

inline constexpr std::array<DatasetClass, 3> kAllClasses{
    DatasetClass::html, DatasetClass::image, DatasetClass::video};

std::string_view to_string(DatasetClass c);
DatasetClass parse_dataset_class(std::string_view name);

// Mean file size in bytes (112 KB, 2.7 MB, 152 MB; 1 KB = 1000 bytes).
double class_mean_size(DatasetClass c);
std::size_t class_file_count(DatasetClass c);
// File sizes of the class dataset: class_file_count files of the mean size.
std::vector<double> class_dataset(DatasetClass c);

// Device used for generated logs.
DeviceInfo sim_device();

// One log per (setting in coverage, class, repeat), with independent
// multiplicative uniform(-5%, +5%) noise on throughput and power.
std::vector<TransferLog> generate_logs(const NetScenario& scn, const PowerModel& pm,
                                       std::span<const ParamSetting> coverage,
                                       int repeats, std::uint64_t seed);

// Exhaustive argmax of th / e over the 252 lattice nodes; ties go to smaller
// cc, then p, then bs.
ParamSetting ground_truth_argmax(const NetScenario& scn, const PowerModel& pm,
                                 DatasetClass c);

// Random scenario for sweeps: bw_cap log-uniform in [5, 500] Mbps, rtt
// log-uniform in [10, 400] ms, other constants at defaults.
NetScenario random_scenario(std::uint64_t seed);

// Synthetic learning corpus: the optimal setting is a step function of file
// size class (cc, bs) and bandwidth (p).
struct CorpusRow {
  learn::TrainingRow row;
  NetScenario scenario;  // bw_cap/rtt match the row's features
  DatasetClass cls;
};
std::vector<CorpusRow> synthetic_corpus(std::size_t n, std::uint64_t seed);
ParamSetting corpus_target(DatasetClass c, double bw_mbps);

// Flat key = value scenario file; unknown keys are an error.
struct ScenarioFile {
  NetScenario scenario;
  PowerModel power;
};
ScenarioFile load_scenario(const std::string& path);

}  // namespace fasthla::sim
