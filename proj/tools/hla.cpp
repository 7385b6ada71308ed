// Historical log analysis server and offline analyzer.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fasthla/config.hpp"
#include "fasthla/error.hpp"
#include "fasthla/learn.hpp"
#include "fasthla/logs.hpp"
#include "fasthla/pipeline.hpp"
#include "fasthla/server.hpp"

using namespace fasthla;

namespace {

int serve(const std::string& config_path) {
  service::ServiceConfig cfg;
  if (!config_path.empty()) cfg = service::ServiceConfig::from(KeyValueConfig::load(config_path));

  // Signals are taken synchronously below; block them before any thread starts.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::Service svc(cfg);
  const int port = svc.start();
  std::cerr << "hla: serving on " << cfg.host << ":" << port << " (model v"
            << svc.model_version() << ", " << svc.log_count() << " logs)\n";
  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "hla: shutting down\n";
  svc.stop();
  return 0;
}

std::vector<std::uint8_t> read_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), {}};
}

int analyze(const std::string& logs_path, const std::string& out_path,
            const std::string& objective, const std::string& prior_path, std::uint64_t seed) {
  service::PipelineOptions opt;
  opt.seed = seed;
  opt.optimize.objective = parse_objective(objective);
  const auto batch = read_jsonl_file(logs_path);
  if (batch.rejected > 0) {
    std::cerr << "hla: skipped " << batch.rejected << " malformed lines\n";
  }
  learn::LearnedModel prior;
  const bool has_prior = !prior_path.empty();
  if (has_prior) prior = learn::deserialize(read_blob(prior_path));

  const auto r = service::run_pipeline(batch.logs, has_prior ? &prior : nullptr, opt);
  for (const auto& s : r.skipped) {
    std::cerr << "hla: skipped cluster " << broker::key_to_string(s.cluster.key) << " ("
              << s.cluster.logs << " logs): " << s.reason << "\n";
  }
  std::printf("%-44s %6s  %-16s %12s %14s\n", "cluster", "logs", "theta_opt", "th_mbps",
              "e_j_per_100mb");
  for (const auto& row : r.table) {
    std::printf("%-44s %6zu  %-16s %12.3f %14.4f\n",
                broker::key_to_string(row.cluster.key).c_str(), row.cluster.logs,
                to_string(row.theta_opt).c_str(), row.th, row.e);
  }

  const auto blob = learn::serialize(r.model);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error(Errc::io, "cannot write " + out_path);
  std::printf("model v%u (%zu bytes, %zu training rows, %.2f s) -> %s\n", r.model.version,
              blob.size(), r.training_rows, r.wall_time, out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Historical log analysis: parameter optimization and model training"};
  app.require_subcommand(1);

  std::string config;
  auto* serve_cmd = app.add_subcommand("serve", "Run the analysis service");
  serve_cmd->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);

  std::string logs, out, objective = "efficiency", prior;
  std::uint64_t seed = 42;
  auto* analyze_cmd = app.add_subcommand("analyze", "Run the pipeline once over a log file");
  analyze_cmd->add_option("--logs", logs, "JSONL transfer logs")->required();
  analyze_cmd->add_option("--out", out, "Model blob to write")->required();
  analyze_cmd->add_option("--objective", objective, "efficiency | min_energy | max_throughput");
  analyze_cmd->add_option("--prior", prior, "Model blob to continue training from");
  analyze_cmd->add_option("--seed", seed, "Training seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return serve(config);
    return analyze(logs, out, objective, prior, seed);
  } catch (const Error& e) {
    std::cerr << "hla: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "hla: " << e.what() << "\n";
    return 1;
  }
}
