#include "fasthla/pipeline.hpp"

#include <chrono>

#include "fasthla/cluster.hpp"
#include "fasthla/error.hpp"
#include "fasthla/logs.hpp"

namespace fasthla::service {

namespace {

ClusterSummary summarize(std::span<const TransferLog> logs, const LogCluster& c) {
  ClusterSummary s;
  s.logs = c.members.size();
  for (auto i : c.members) {
    s.mean_fs += logs[i].fs;
    s.mean_rtt += logs[i].t_rtt;
    s.mean_bw += logs[i].bw;
  }
  const double n = static_cast<double>(c.members.size());
  s.mean_fs /= n;
  s.mean_rtt /= n;
  s.mean_bw /= n;
  const auto& first = logs[c.members.front()];
  s.key.net_if = first.net_if;
  s.key.model = first.device.model;
  s.key.bw_bucket = broker::bw_bucket(s.mean_bw);
  s.key.rtt_bucket = broker::rtt_bucket(s.mean_rtt);
  s.key.size_class = broker::size_class(s.mean_fs);
  return s;
}

}  // namespace

PipelineResult run_pipeline(std::span<const TransferLog> logs, const learn::LearnedModel* prior,
                            const PipelineOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto clean = preprocess_logs(logs);
  if (clean.empty()) throw Error(Errc::empty_input, "no usable logs");

  PipelineResult out;
  out.usable_logs = clean.size();
  std::vector<learn::TrainingRow> rows;
  for (const auto& c : cluster_logs(clean, opt.cluster_threshold)) {
    const auto summary = summarize(clean, c);
    std::vector<TransferLog> members;
    members.reserve(c.members.size());
    for (auto i : c.members) members.push_back(clean[i]);
    OptimizationResult best;
    try {
      best = optimal_params(members, opt.optimize);
    } catch (const Error& e) {
      if (e.code() != Errc::insufficient_data) throw;
      out.skipped.push_back({summary, e.what()});
      continue;
    }
    out.table.push_back({summary, best.theta, best.th_at, best.e_at});
    for (const auto& l : members) rows.push_back({learn::features_of(l), best.theta});
  }
  if (out.table.empty()) {
    throw Error(Errc::no_trainable_data,
                "all " + std::to_string(out.skipped.size()) + " clusters lack data to optimize");
  }
  out.training_rows = rows.size();
  out.model = learn::train(rows, opt.seed, prior, opt.train);
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

PipelineResult run_pipeline(std::string_view jsonl, const learn::LearnedModel* prior,
                            const PipelineOptions& opt) {
  const auto batch = parse_jsonl(jsonl);
  return run_pipeline(batch.logs, prior, opt);
}

AmortizationResult amortization_check(const CostEstimate& est) {
  if (est.n < 1) throw Error(Errc::invalid_argument, "amortization count must be >= 1");
  for (const auto* c : {&est.c_hla, &est.c_opt, &est.c_noopt}) {
    if (!(c->time >= 0 && c->energy >= 0)) {
      throw Error(Errc::invalid_argument, "costs must be non-negative");
    }
  }
  const double n = est.n;
  AmortizationResult r;
  r.time_holds = est.c_hla.time / n + est.c_opt.time < est.c_noopt.time;
  r.energy_holds = est.c_hla.energy / n + est.c_opt.energy < est.c_noopt.energy;
  r.holds = r.time_holds && r.energy_holds;
  r.margin = est.c_noopt.energy - (est.c_hla.energy / n + est.c_opt.energy);
  return r;
}

Cost simulated_cost(const sim::NetScenario& scn, const sim::PowerModel& pm,
                    const ParamSetting& theta, sim::DatasetClass cls) {
  const auto sizes = sim::class_dataset(cls);
  const auto r = sim::simulate(scn, pm, theta, sizes, false);
  return {r.wall_time, (pm.p_base + r.dynamic_power) * r.wall_time};
}

CostEstimate estimate_costs(const sim::NetScenario& scn, const sim::PowerModel& pm,
                            sim::DatasetClass cls, const ParamSetting& theta_opt,
                            double pipeline_wall_time, int n) {
  if (!(pipeline_wall_time >= 0)) {
    throw Error(Errc::invalid_argument, "pipeline wall time must be non-negative");
  }
  CostEstimate est;
  est.c_hla = {pipeline_wall_time, pipeline_wall_time * (pm.p_base + pm.b)};
  est.c_opt = simulated_cost(scn, pm, theta_opt, cls);
  est.c_noopt = simulated_cost(scn, pm, broker::kDefaultParams, cls);
  est.n = n;
  return est;
}

}  // namespace fasthla::service
