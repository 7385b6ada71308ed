#include "fasthla/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "fasthla/config.hpp"
#include "fasthla/error.hpp"

namespace fasthla::sim {

namespace {

void validate(const NetScenario& scn, const PowerModel& pm) {
  if (!(scn.bw_cap > 0)) throw Error(Errc::scenario, "bw_cap must be positive");
  if (!(scn.rtt > 0)) throw Error(Errc::scenario, "rtt must be positive");
  if (!(scn.window > 0)) throw Error(Errc::scenario, "window must be positive");
  if (!(scn.knee >= 1)) throw Error(Errc::scenario, "knee must be >= 1");
  if (!(scn.slope >= 0)) throw Error(Errc::scenario, "slope must be >= 0");
  if (!(pm.p_base >= 0 && pm.a >= 0 && pm.b >= 0)) {
    throw Error(Errc::scenario, "power model constants must be >= 0");
  }
}

double steady_throughput(const NetScenario& scn, const ParamSetting& theta) {
  const double s = static_cast<double>(theta.cc) * theta.p;
  const double u =
      std::min(1.0, 8.0 * scn.window * 1e-6 / (scn.bw_cap * scn.rtt * 1e-3));
  const double raw = scn.bw_cap * (1.0 - std::pow(1.0 - u, s));
  const double g = theta.bs / (theta.bs + 1024.0);
  const double c = s <= scn.knee ? 1.0 : std::max(0.5, 1.0 - scn.slope * (s - scn.knee));
  return raw * g * c;
}

}  // namespace

SimResult simulate(const NetScenario& scn, const PowerModel& pm,
                   const ParamSetting& theta, std::span<const double> sizes,
                   bool emit_trace) {
  validate(scn, pm);
  if (sizes.empty()) throw Error(Errc::invalid_argument, "dataset is empty");
  if (theta.cc < 1 || theta.p < 1 || theta.bs < 1) {
    throw Error(Errc::invalid_argument, "parameters must be positive");
  }
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  if (!(total > 0)) throw Error(Errc::invalid_argument, "dataset has no bytes");

  SimResult r;
  r.throughput = steady_throughput(scn, theta);
  const double rounds = std::ceil(static_cast<double>(sizes.size()) / theta.cc);
  r.wall_time = total * 8e-6 / r.throughput + rounds * scn.rtt * 1e-3;
  const double s = static_cast<double>(theta.cc) * theta.p;
  r.dynamic_power = pm.a * std::min(s, 2.0 * scn.knee) + pm.b * (r.throughput / scn.bw_cap);
  r.e_per_100mb = r.dynamic_power * r.wall_time * 1e8 / total;

  if (!emit_trace) return r;
  const double watts = pm.p_base + r.dynamic_power;
  r.trace.p_base = pm.p_base;
  r.trace.window = {0.0, r.wall_time};
  const auto whole = static_cast<std::size_t>(std::floor(r.wall_time));
  r.trace.samples.reserve(whole + 2);
  for (std::size_t t = 0; t <= whole; ++t)
    r.trace.samples.push_back({static_cast<double>(t), watts});
  if (r.trace.samples.back().t < r.wall_time)
    r.trace.samples.push_back({r.wall_time, watts});
  return r;
}

double efficiency(const SimResult& r) { return r.throughput / r.e_per_100mb; }

std::string_view to_string(DatasetClass c) {
  switch (c) {
    case DatasetClass::html: return "html";
    case DatasetClass::image: return "image";
    case DatasetClass::video: return "video";
  }
  return "html";
}

DatasetClass parse_dataset_class(std::string_view name) {
  for (auto c : kAllClasses)
    if (to_string(c) == name) return c;
  throw Error(Errc::invalid_argument, "unknown dataset class '" + std::string(name) + "'");
}

double class_mean_size(DatasetClass c) {
  switch (c) {
    case DatasetClass::html: return 112e3;
    case DatasetClass::image: return 2.7e6;
    case DatasetClass::video: return 152e6;
  }
  return 0;
}

std::size_t class_file_count(DatasetClass c) {
  switch (c) {
    case DatasetClass::html: return 200;
    case DatasetClass::image: return 20;
    case DatasetClass::video: return 4;
  }
  return 0;
}

std::vector<double> class_dataset(DatasetClass c) {
  return std::vector<double>(class_file_count(c), class_mean_size(c));
}

DeviceInfo sim_device() {
  return {"sim-phone", "android-sim", 2, 4ull << 30, "802.11ac"};
}

std::vector<TransferLog> generate_logs(const NetScenario& scn, const PowerModel& pm,
                                       std::span<const ParamSetting> coverage,
                                       int repeats, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  std::vector<TransferLog> out;
  out.reserve(coverage.size() * kAllClasses.size() * static_cast<std::size_t>(std::max(repeats, 0)));
  std::int64_t ts = 1'600'000'000;
  for (const auto& theta : coverage) {
    for (auto cls : kAllClasses) {
      const auto sizes = class_dataset(cls);
      const auto r = simulate(scn, pm, theta, sizes, false);
      for (int k = 0; k < repeats; ++k) {
        TransferLog l;
        l.fs = class_mean_size(cls);
        l.n_files = static_cast<double>(sizes.size());
        l.t_rtt = scn.rtt;
        l.bs_tcp = scn.window;
        l.bw = scn.bw_cap;
        l.params = theta;
        l.throughput = r.throughput * (1.0 + noise(rng));
        l.pw = r.dynamic_power * (1.0 + noise(rng));
        l.duration = r.wall_time;
        const double s = static_cast<double>(theta.cc) * theta.p;
        l.mu_cpu = std::min(1.0, 0.05 + 0.01 * s);
        l.mu_mem = std::min(1.0, 0.1 + 0.002 * s);
        l.mu_nic = std::min(1.0, r.throughput / scn.bw_cap);
        l.device = sim_device();
        l.net_if = NetIf::wifi;
        l.status = TransferStatus::completed;
        l.timestamp = ts++;
        out.push_back(std::move(l));
      }
    }
  }
  return out;
}

ParamSetting ground_truth_argmax(const NetScenario& scn, const PowerModel& pm,
                                 DatasetClass c) {
  const auto sizes = class_dataset(c);
  ParamSetting best{};
  double best_eff = -INFINITY;
  for (const auto& theta : full_lattice()) {
    const double eff = efficiency(simulate(scn, pm, theta, sizes, false));
    if (eff > best_eff) {
      best_eff = eff;
      best = theta;
    }
  }
  return best;
}

NetScenario random_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bw(std::log(5.0), std::log(500.0));
  std::uniform_real_distribution<double> rtt(std::log(10.0), std::log(400.0));
  NetScenario scn;
  scn.bw_cap = std::exp(bw(rng));
  scn.rtt = std::exp(rtt(rng));
  scn.seed = seed;
  return scn;
}

ParamSetting corpus_target(DatasetClass c, double bw_mbps) {
  ParamSetting t;
  switch (c) {
    case DatasetClass::html: t.cc = 16; t.bs = 8 * 1024; break;
    case DatasetClass::image: t.cc = 8; t.bs = 16 * 1024; break;
    case DatasetClass::video: t.cc = 2; t.bs = 64 * 1024; break;
  }
  t.p = bw_mbps < 30 ? 2 : (bw_mbps < 150 ? 4 : 8);
  return t;
}

std::vector<CorpusRow> synthetic_corpus(std::size_t n, std::uint64_t seed) {
  struct Range {
    double fs_lo, fs_hi, n_lo, n_hi;
  };
  // Per-class size ranges (min-max of each dataset) and file-count ranges.
  constexpr std::array<Range, 3> kRanges{{{56e3, 155e3, 100, 5000},
                                          {2e6, 3.2e6, 20, 200},
                                          {140e6, 167e6, 1, 64}}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_class(0, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick_if(0, 1);
  std::uniform_int_distribution<int> pick_cpu(0, 3);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + unit(rng) * (std::log(hi) - std::log(lo)));
  };

  std::vector<CorpusRow> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int ci = pick_class(rng);
    const auto cls = kAllClasses[ci];
    const auto& r = kRanges[ci];
    const double fs = log_uniform(r.fs_lo, r.fs_hi);
    const double files = std::round(log_uniform(r.n_lo, r.n_hi));
    const double rtt = log_uniform(10, 400);
    const double bw = log_uniform(5, 500);
    const auto net_if = pick_if(rng) == 0 ? NetIf::wifi : NetIf::cellular;
    const int cpu = pick_cpu(rng);
    CorpusRow row;
    row.row.f = learn::make_features(fs, files, rtt, bw, net_if, cpu);
    row.row.theta = corpus_target(cls, bw);
    row.scenario.bw_cap = bw;
    row.scenario.rtt = rtt;
    row.scenario.seed = seed;
    row.cls = cls;
    out.push_back(row);
  }
  return out;
}

ScenarioFile load_scenario(const std::string& path) {
  const auto cfg = KeyValueConfig::load(path);
  static const std::set<std::string> kKnown{"bw_cap", "rtt",    "window", "knee", "slope",
                                            "seed",   "p_base", "a",      "b"};
  for (const auto& [key, value] : cfg.values()) {
    if (!kKnown.count(key)) throw Error(Errc::parse, "unknown scenario key '" + key + "'");
  }
  ScenarioFile f;
  f.scenario.bw_cap = cfg.get_double("bw_cap", f.scenario.bw_cap);
  f.scenario.rtt = cfg.get_double("rtt", f.scenario.rtt);
  f.scenario.window = cfg.get_double("window", f.scenario.window);
  f.scenario.knee = cfg.get_double("knee", f.scenario.knee);
  f.scenario.slope = cfg.get_double("slope", f.scenario.slope);
  f.scenario.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  f.power.p_base = cfg.get_double("p_base", f.power.p_base);
  f.power.a = cfg.get_double("a", f.power.a);
  f.power.b = cfg.get_double("b", f.power.b);
  validate(f.scenario, f.power);
  return f;
}

}  // namespace fasthla::sim
