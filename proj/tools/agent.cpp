// Device-side agent: resolves parameters, runs transfers, reports logs.
// Also hosts the simulator front ends (bench, gen-logs).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "fasthla/broker.hpp"
#include "fasthla/error.hpp"
#include "fasthla/learn.hpp"
#include "fasthla/logs.hpp"
#include "fasthla/netio.hpp"
#include "fasthla/sim.hpp"
#include "httplib.h"

using namespace fasthla;

namespace {

struct TransferArgs {
  std::string server;
  std::string dest;
  int limit = broker::kDefaultUserLimit;
  std::vector<std::string> urls;
  std::string cache_path = "agent-cache.jsonl";
  std::string model_path = "agent-model.bin";
  std::string pending_path = "agent-pending.jsonl";
  std::string device_model = "generic";
  std::string net_if = "wifi";
  double bw = 100;
  double rtt = 0;  // 0: use the measured connect time
};

std::optional<learn::LearnedModel> read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)), {});
  try {
    return learn::deserialize(blob);
  } catch (const Error& e) {
    std::cerr << "agent: ignoring stored model: " << e.what() << "\n";
    return std::nullopt;
  }
}

// One conditional GET. Keeps the stored model on 304 or any failure.
std::optional<learn::LearnedModel> refresh_model(httplib::Client& cli, const std::string& path) {
  auto model = read_model(path);
  httplib::Headers headers;
  if (model) headers.emplace("If-None-Match", "\"" + std::to_string(model->version) + "\"");
  auto res = cli.Get("/v1/model", headers);
  if (!res) {
    std::cerr << "agent: model server unreachable, using "
              << (model ? "stored model" : "defaults") << "\n";
    return model;
  }
  if (res->status == 200) {
    const std::vector<std::uint8_t> blob(res->body.begin(), res->body.end());
    try {
      auto fresh = learn::deserialize(blob);
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
      return fresh;
    } catch (const Error& e) {
      std::cerr << "agent: bad model from server: " << e.what() << "\n";
    }
  }
  return model;
}

int cpu_class() {
  const unsigned n = std::thread::hardware_concurrency();
  return n <= 2 ? 0 : n <= 4 ? 1 : n <= 8 ? 2 : 3;
}

int transfer(const TransferArgs& a) {
  if (a.urls.empty()) throw Error(Errc::empty_plan, "no URLs given");
  const NetIf net_if = a.net_if == "cellular" ? NetIf::cellular : NetIf::wifi;
  DeviceInfo device{a.device_model, "linux", cpu_class(), 0, ""};

  httplib::Client cli(a.server);
  cli.set_connection_timeout(5);
  const auto model = refresh_model(cli, a.model_path);

  std::vector<FileEntry> files;
  double rtt_sum = 0;
  for (const auto& url : a.urls) {
    const auto info = netio::probe_remote(url);
    if (!info.size) throw Error(Errc::transfer, url + ": server did not report a size");
    files.push_back({url, *info.size});
    rtt_sum += info.rtt_ms;
  }
  const broker::NetProbe probe{a.rtt > 0 ? a.rtt : rtt_sum / static_cast<double>(files.size()),
                               a.bw};

  broker::ParamCache cache;
  cache.load(a.cache_path);
  const auto req = broker::TransferRequest::from_dataset(files, a.limit);
  req.validate();
  const auto plan = broker::schedule_mixed(req, [&](const broker::TransferRequest& sub) {
    const auto r = broker::resolve_params(sub, probe, device, net_if, cache,
                                          model ? &*model : nullptr);
    std::cerr << "agent: " << sub.num_files << " files of ~" << static_cast<long long>(sub.avg_file_size)
              << " B -> " << to_string(r.theta) << " from " << broker::to_string(r.source) << "\n";
    return r.theta;
  });

  const auto report = netio::execute(plan, a.dest);
  for (const auto& f : report.files) {
    if (f.completed) {
      std::printf("%s  %s%s\n", f.sha256.c_str(), f.path.c_str(),
                  f.range_fallback ? "  (p=1 fallback)" : "");
    } else {
      std::printf("FAILED  %s  %s\n", f.url.c_str(), f.error.c_str());
    }
  }
  std::printf("%zu/%zu files, %.3f MB in %.3f s, %.3f Mbps, peak %d connections\n",
              report.completed_count(), report.files.size(), report.total_bytes / 1e6,
              report.wall_time, report.throughput, report.max_connections);

  // Write back what worked. Without a power trace the agent ranks settings by
  // the throughput they achieved.
  std::size_t base = 0;
  for (const auto& e : plan.entries) {
    bool ok = true;
    for (std::size_t i = 0; i < e.cluster.files.size(); ++i) ok &= report.files[base + i].completed;
    base += e.cluster.files.size();
    if (!ok || e.scaled || !e.theta.is_feasible() || report.wall_time <= 0) continue;
    auto sub = broker::TransferRequest::from_dataset(e.cluster.files, a.limit);
    double bytes = 0;
    for (const auto& f : e.cluster.files) bytes += static_cast<double>(f.size);
    const double th = bytes * 8e-6 / report.wall_time;
    cache.record(broker::make_key(sub, probe, device, net_if),
                 {e.theta, th, th, static_cast<std::int64_t>(std::time(nullptr))});
  }
  cache.save(a.cache_path);

  broker::LogBuffer buffer;
  if (std::filesystem::exists(a.pending_path))
    for (const auto& l : read_jsonl_file(a.pending_path).logs) buffer.push(l);
  buffer.push(netio::emit_log(report, req, probe, device, net_if));
  const auto sent = buffer.flush([&](const std::string& body) {
    auto res = cli.Post("/v1/logs", body, "application/x-ndjson");
    return res && res->status == 200;
  });
  const auto left = buffer.snapshot();
  std::remove(a.pending_path.c_str());
  if (!left.empty()) append_jsonl_file(a.pending_path, left);
  std::cerr << "agent: sent " << sent << " logs, " << left.size() << " pending\n";

  if (report.failed_count() > 0) {
    throw Error(Errc::transfer, std::to_string(report.failed_count()) + " files failed");
  }
  return 0;
}

sim::ScenarioFile scenario_or_default(const std::string& path) {
  return path.empty() ? sim::ScenarioFile{} : sim::load_scenario(path);
}

int bench(const std::string& scenario_path, const std::string& grid, const std::string& cls) {
  if (grid != "full") throw Error(Errc::invalid_argument, "unknown grid '" + grid + "'");
  const auto sf = scenario_or_default(scenario_path);
  const auto sizes = sim::class_dataset(sim::parse_dataset_class(cls));
  std::printf("cc,p,bs_kb,throughput_mbps,energy_j_per_100mb,efficiency\n");
  for (const auto& theta : full_lattice()) {
    const auto r = sim::simulate(sf.scenario, sf.power, theta, sizes, false);
    std::printf("%d,%d,%d,%.6f,%.6f,%.6f\n", theta.cc, theta.p, theta.bs / 1024, r.throughput,
                r.e_per_100mb, sim::efficiency(r));
  }
  return 0;
}

int gen_logs(const std::string& scenario_path, const std::string& out, int repeats,
             std::uint64_t seed) {
  const auto sf = scenario_or_default(scenario_path);
  const auto lattice = full_lattice();
  const auto logs = sim::generate_logs(sf.scenario, sf.power, lattice, repeats, seed);
  std::remove(out.c_str());
  append_jsonl_file(out, logs);
  std::printf("%zu logs -> %s\n", logs.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer agent and simulator front end"};
  app.require_subcommand(1);

  TransferArgs ta;
  auto* transfer_cmd = app.add_subcommand("transfer", "Download URLs with tuned parameters");
  transfer_cmd->add_option("--server", ta.server, "Analysis service base URL")->required();
  transfer_cmd->add_option("--dest", ta.dest, "Destination directory")->required();
  transfer_cmd->add_option("--limit", ta.limit, "Max total concurrent files")->check(CLI::PositiveNumber);
  transfer_cmd->add_option("--cache", ta.cache_path, "Parameter cache file");
  transfer_cmd->add_option("--model-file", ta.model_path, "Stored model blob");
  transfer_cmd->add_option("--pending", ta.pending_path, "Unsent log file");
  transfer_cmd->add_option("--device", ta.device_model, "Device model name for logs");
  transfer_cmd->add_option("--net-if", ta.net_if, "wifi | cellular")
      ->check(CLI::IsMember({"wifi", "cellular"}));
  transfer_cmd->add_option("--bw", ta.bw, "Link bandwidth estimate, Mbps")->check(CLI::PositiveNumber);
  transfer_cmd->add_option("--rtt", ta.rtt, "RTT estimate, ms (default: measured)");
  transfer_cmd->add_option("urls", ta.urls, "http:// URLs")->required();

  std::string scenario, grid = "full", cls = "html";
  auto* bench_cmd = app.add_subcommand("bench", "Simulated sweep over the parameter lattice (CSV)");
  bench_cmd->add_option("--scenario", scenario, "Scenario file")->check(CLI::ExistingFile);
  bench_cmd->add_option("--grid", grid, "Lattice subset; only 'full'");
  bench_cmd->add_option("--class", cls, "html | image | video");

  std::string gen_out;
  int repeats = 3;
  std::uint64_t seed = 42;
  auto* gen_cmd = app.add_subcommand("gen-logs", "Write simulated transfer logs as JSONL");
  gen_cmd->add_option("--scenario", scenario, "Scenario file")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen_out, "Output file")->required();
  gen_cmd->add_option("--repeats", repeats, "Logs per setting and class")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", seed, "Noise seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*transfer_cmd) return transfer(ta);
    if (*bench_cmd) return bench(scenario, grid, cls);
    return gen_logs(scenario, gen_out, repeats, seed);
  } catch (const Error& e) {
    std::cerr << "agent: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "agent: " << e.what() << "\n";
    return 1;
  }
}
