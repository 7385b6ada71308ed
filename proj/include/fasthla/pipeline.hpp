#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fasthla/broker.hpp"
#include "fasthla/learn.hpp"
#include "fasthla/optimize.hpp"
#include "fasthla/sim.hpp"
#include "fasthla/types.hpp"

namespace fasthla::service {

struct PipelineOptions {
  std::uint64_t seed = 42;
  double cluster_threshold = kDefaultLogThreshold;
  OptimizeOptions optimize;
  learn::TrainOptions train;
};

struct ClusterSummary {
  broker::NetConditionKey key;
  std::size_t logs = 0;
  double mean_fs = 0;   // bytes
  double mean_rtt = 0;  // ms
  double mean_bw = 0;   // Mbps
};

struct TableRow {
  ClusterSummary cluster;
  ParamSetting theta_opt;
  double th = 0;  // surface prediction at theta_opt, Mbps
  double e = 0;   // surface prediction at theta_opt, J per 100 MB
};

struct SkippedCluster {
  ClusterSummary cluster;
  std::string reason;
};

struct PipelineResult {
  learn::LearnedModel model;
  std::vector<TableRow> table;         // one row per trainable cluster
  std::vector<SkippedCluster> skipped; // clusters optimal_params rejected
  std::size_t usable_logs = 0;
  std::size_t training_rows = 0;
  double wall_time = 0;  // s
};

// preprocess -> cluster -> optimal_params per cluster -> train. Every log of
// a trainable cluster becomes one training row labelled with the cluster's
// optimum. Training continues from `prior` when given.
// Throws Errc::empty_input when nothing survives preprocessing and
// Errc::no_trainable_data when every cluster is skipped.
PipelineResult run_pipeline(std::span<const TransferLog> logs,
                            const learn::LearnedModel* prior = nullptr,
                            const PipelineOptions& opt = {});

// Same, from JSONL text. Malformed lines are dropped.
PipelineResult run_pipeline(std::string_view jsonl, const learn::LearnedModel* prior = nullptr,
                            const PipelineOptions& opt = {});

struct Cost {
  double time = 0;    // s
  double energy = 0;  // J
};

struct CostEstimate {
  Cost c_hla;    // one analysis run
  Cost c_opt;    // transfer at the optimized setting
  Cost c_noopt;  // transfer at the default setting
  int n = 1;     // transfers sharing one analysis run
};

struct AmortizationResult {
  bool holds = false;
  bool time_holds = false;
  bool energy_holds = false;
  double margin = 0;  // J: c_noopt - (c_hla / n + c_opt)
};

// c_hla / n + c_opt < c_noopt in both time and energy.
// Throws Errc::invalid_argument for n < 1 or negative costs.
AmortizationResult amortization_check(const CostEstimate& est);

// Simulated cost of one transfer of the class dataset: wall time and total
// device energy (base plus dynamic).
Cost simulated_cost(const sim::NetScenario& scn, const sim::PowerModel& pm,
                    const ParamSetting& theta, sim::DatasetClass cls);

// Costs for a scenario/class. The analysis run is charged at its wall time
// and a fully loaded power draw of p_base + b.
CostEstimate estimate_costs(const sim::NetScenario& scn, const sim::PowerModel& pm,
                            sim::DatasetClass cls, const ParamSetting& theta_opt,
                            double pipeline_wall_time, int n);

}  // namespace fasthla::service
