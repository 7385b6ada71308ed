// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "fasthla/broker.hpp"
#include "fasthla/energy.hpp"
#include "fasthla/error.hpp"
#include "fasthla/learn.hpp"
#include "fasthla/logs.hpp"
#include "fasthla/netio.hpp"
#include "fasthla/optimize.hpp"
#include "fasthla/pipeline.hpp"
#include "fasthla/server.hpp"
#include "fasthla/sim.hpp"
#include "fasthla/spline.hpp"
#include "fasthla/surface.hpp"
#include "fixture_server.hpp"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "oracles.hpp"

using namespace fasthla;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

sim::DatasetClass class_of(double mean_fs) {
  for (auto c : sim::kAllClasses)
    if (std::abs(mean_fs / sim::class_mean_size(c) - 1) < 0.01) return c;
  throw std::runtime_error("cluster does not match a dataset class");
}

double sim_eff(const sim::NetScenario& scn, const sim::PowerModel& pm, const ParamSetting& t,
               sim::DatasetClass c) {
  return sim::efficiency(sim::simulate(scn, pm, t, sim::class_dataset(c), false));
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Spline interpolation, C2 continuity, natural ends, dense-solver coefficients.
Outcome spline_correctness() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> count(2, 12);
  std::uniform_real_distribution<double> gap(0.1, 3.0), val(-100, 100);
  double worst_interp = 0, worst_c2 = 0, worst_nat = 0, worst_coef = 0;
  for (int set = 0; set < 1000; ++set) {
    const int n = count(rng);
    std::vector<double> xs, ys;
    double x = val(rng);
    for (int i = 0; i < n; ++i) {
      xs.push_back(x);
      ys.push_back(val(rng));
      x += gap(rng);
    }
    const auto s = CubicSpline1D::fit(xs, ys);
    const auto& c = s.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double h = xs[i + 1] - xs[i];
      worst_interp = std::max(worst_interp, std::abs(c[i][0] - ys[i]));
      const double end = c[i][0] + c[i][1] * h + c[i][2] * h * h + c[i][3] * h * h * h;
      worst_interp = std::max(worst_interp, std::abs(end - ys[i + 1]));
      if (i + 1 < c.size()) {
        const double d1 = c[i][1] + 2 * c[i][2] * h + 3 * c[i][3] * h * h;
        const double d2 = 2 * c[i][2] + 6 * c[i][3] * h;
        worst_c2 = std::max({worst_c2, std::abs(d1 - c[i + 1][1]), std::abs(d2 - 2 * c[i + 1][2])});
      }
    }
    const double hl = xs[n - 1] - xs[n - 2];
    worst_nat = std::max({worst_nat, std::abs(2 * c.front()[2]),
                          std::abs(2 * c.back()[2] + 6 * c.back()[3] * hl)});
    const oracle::DenseSpline d(xs, ys);
    for (std::size_t i = 0; i < c.size(); ++i)
      for (int k = 0; k < 4; ++k) worst_coef = std::max(worst_coef, std::abs(c[i][k] - d.coef[i][k]));
  }
  const bool ok = worst_interp < 1e-9 && worst_c2 < 1e-9 && worst_nat < 1e-9 && worst_coef < 1e-9;
  return {ok, fmt("1000 knot sets; max residual interp %.1e, C2 %.1e, natural %.1e, coef %.1e",
                  worst_interp, worst_c2, worst_nat, worst_coef)};
}

// 2. Grid argmax against an independent node scan; refine never worse.
Outcome optimizer_equivalence() {
  int equal = 0, refine_ok = 0;
  double worst_gap = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::uniform_real_distribution<double> th(1, 100), e(0.5, 50);
    std::vector<PerfSample> samples;
    for (const auto& t : full_lattice()) samples.push_back({t, th(rng), e(rng)});
    ParamSetting best{};
    double best_v = -INFINITY;
    for (int cc : kCcLevels)
      for (int p : kPLevels)
        for (int bs : kBsLevels)
          for (const auto& s : samples)
            if (s.theta == ParamSetting{cc, p, bs} && s.th / std::max(s.e, 1e-6) > best_v) {
              best_v = s.th / std::max(s.e, 1e-6);
              best = s.theta;
            }
    const auto surf = fit_surface(samples);
    const auto g = grid_argmax(surf);
    equal += g.theta == best;
    const auto r = refine(surf, g.theta);
    refine_ok += r.objective - g.objective >= -1e-9;
    worst_gap = std::min(worst_gap, r.objective - g.objective);
  }
  return {equal == 100 && refine_ok == 100,
          fmt("grid == oracle on %d/100 surfaces; refine >= grid on %d/100 (min delta %.2e)", equal,
              refine_ok, worst_gap)};
}

// 3. Pipeline picks near-optimal settings; beats the fixed baseline.
Outcome end_to_end_pipeline(double& default_wall, ParamSetting& default_video_theta) {
  const sim::PowerModel pm;
  const auto lattice = full_lattice();
  int good = 0;
  std::string worst;
  double worst_ratio = 2;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto scn = sim::random_scenario(seed);
    const auto logs = sim::generate_logs(scn, pm, lattice, 3, seed);
    const auto res = service::run_pipeline(logs);
    bool all = res.table.size() == 3;
    for (const auto& row : res.table) {
      const auto c = class_of(row.cluster.mean_fs);
      const double ratio =
          sim_eff(scn, pm, row.theta_opt, c) / sim_eff(scn, pm, sim::ground_truth_argmax(scn, pm, c), c);
      if (ratio < worst_ratio) {
        worst_ratio = ratio;
        worst = fmt("seed %d %s", int(seed), std::string(sim::to_string(c)).c_str());
      }
      all &= ratio >= 0.95;
    }
    good += all;
  }

  const sim::NetScenario scn;
  const auto res = service::run_pipeline(sim::generate_logs(scn, pm, lattice, 3, 42));
  default_wall = res.wall_time;
  double min_gain = 1e300;
  for (const auto& row : res.table) {
    const auto c = class_of(row.cluster.mean_fs);
    if (c == sim::DatasetClass::video) default_video_theta = row.theta_opt;
    min_gain = std::min(min_gain, sim_eff(scn, pm, row.theta_opt, c) /
                                      sim_eff(scn, pm, {1, 1, 8 * 1024}, c));
  }
  const bool ok = good >= 18 && res.table.size() == 3 && min_gain >= 1.5;
  return {ok, fmt("%d/20 scenarios within 5%% (worst %.4f at %s); default scenario gain over "
                  "(1,1,8KB) >= %.2fx on every class",
                  good, worst_ratio, worst.c_str(), min_gain)};
}

// 4. Learning module on the synthetic corpus.
Outcome learning_module() {
  const sim::PowerModel pm;
  const auto corpus = sim::synthetic_corpus(600, 42);
  std::vector<learn::TrainingRow> train, test;
  for (std::size_t i = 0; i < corpus.size(); ++i) (i < 500 ? train : test).push_back(corpus[i].row);
  const auto m = learn::train(train, 42);
  const double acc = learn::accuracy(m, test);
  std::vector<double> actual, predicted;
  for (std::size_t i = 500; i < corpus.size(); ++i) {
    const auto& r = corpus[i];
    const auto sizes = sim::class_dataset(r.cls);
    actual.push_back(sim::simulate(r.scenario, pm, r.row.theta, sizes, false).throughput);
    predicted.push_back(
        sim::simulate(r.scenario, pm, learn::predict(m, r.row.f), sizes, false).throughput);
  }
  const double r2 = learn::r_squared(actual, predicted);
  int sized = 0;
  for (int k = 1; k <= 10; ++k) {
    const auto rows = sim::synthetic_corpus(static_cast<std::size_t>(10 * k + k * k), 100 + k);
    std::vector<learn::TrainingRow> tr;
    for (const auto& r : rows) tr.push_back(r.row);
    learn::TrainOptions o;
    o.epochs = 100 * k;
    const auto blob = learn::serialize(learn::train(tr, k, nullptr, o));
    sized += blob.size() == 1412 && learn::deserialize(blob) == learn::deserialize(blob);
  }
  return {acc >= 0.85 && r2 >= 0.85 && sized == 10,
          fmt("held-out accuracy %.3f, throughput R2 %.4f, %d/10 blobs of 1412 bytes", acc, r2, sized)};
}

// 5. Energy integration and the total-energy identity.
Outcome energy_math() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dt(0.01, 2.0), w(0.0, 6.0), base(0.5, 3.0);
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    PowerTrace t;
    t.p_base = base(rng);
    double s = 0;
    std::vector<double> ts, ws;
    for (int i = 0; i < 100; ++i) {
      t.samples.push_back({s, w(rng)});
      ts.push_back(s);
      ws.push_back(t.samples.back().watts);
      s += dt(rng);
    }
    t.window = {0, ts.back()};
    const double want = oracle::trapezoid(ts, ws, t.p_base);
    worst = std::max(worst, std::abs(dynamic_energy(t) - want) / std::max(want, 1e-300));
  }
  int identity = 0;
  std::uniform_real_distribution<double> u(0, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const double a = k == 0 ? 0 : u(rng), d = k == 0 ? 0 : u(rng);
    const auto b = total_energy(a, d);
    identity += b.e_total == a + d && b.e_base == a && b.e_dynamic == d;
  }
  return {worst < 1e-9 && identity == 1000,
          fmt("max relative error %.1e over 100 traces; identity on %d/1000 breakdowns", worst,
              identity)};
}

// 6. Scheduler limit on random instances plus the worked example.
Outcome scheduler() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> nfiles(1, 40), lvl(0, 5);
  std::uniform_real_distribution<double> lsize(2, 9);
  int ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<FileEntry> files;
    const int n = nfiles(rng);
    for (int i = 0; i < n; ++i)
      files.push_back({"u" + std::to_string(i), static_cast<std::uint64_t>(std::pow(10, lsize(rng)))});
    const auto clusters = cluster_files(files).size();
    const int limit = static_cast<int>(clusters) + static_cast<int>(rng() % 48);
    const auto req = broker::TransferRequest::from_dataset(files, limit);
    const auto plan = broker::schedule_mixed(req, [&](const broker::TransferRequest&) {
      return ParamSetting::from_levels(lvl(rng), lvl(rng), 3);
    });
    ok += plan.total_cc() <= limit && plan.file_count() == files.size();
  }
  std::vector<broker::PlanEntry> e{{{}, {32, 1, 8192}, false}, {{}, {16, 1, 8192}, false}};
  broker::scale_to_limit(e, 24);
  const bool example = e[0].theta.cc == 16 && e[1].theta.cc == 8;
  return {ok == 1000 && example,
          fmt("sum cc <= limit on %d/1000 instances; [32,16] @ 24 -> [%d,%d]", ok, e[0].theta.cc,
              e[1].theta.cc)};
}

// 7. Every lattice setting moves a mixed corpus intact; no-Range fallback.
Outcome transfer_integrity() {
  std::map<std::string, std::string> files;
  const std::uint64_t sizes[] = {0, 1, 7, 999, 1024, 4096, 10'000, 33'333, 65'536, 100'001,
                                 150'000, 200'000, 262'144, 300'007, 400'000, 500'000, 640'000,
                                 777'777, 900'000, 1'048'576};
  for (int i = 0; i < 20; ++i)
    files["file" + std::to_string(i) + ".bin"] = testing_support::random_bytes(sizes[i], 700 + i);
  std::map<std::string, std::string> digest;
  for (const auto& [n, b] : files) digest[n] = netio::sha256_hex(b.data(), b.size());

  auto plan_for = [&](const fixture::Server& srv, ParamSetting theta) {
    FileCluster c;
    for (const auto& [n, b] : files) c.files.push_back({srv.url(n), b.size()});
    broker::SchedulePlan plan;
    plan.entries.push_back({c, theta, false});
    return plan;
  };
  auto intact = [&](const netio::TransferReport& r) {
    if (r.completed_count() != files.size()) return false;
    for (const auto& f : r.files) {
      const auto name = fs::path(f.path).filename().string();
      if (f.sha256 != digest.at(name) || netio::sha256_file(f.path) != digest.at(name)) return false;
    }
    return r.max_connections <= r.connection_limit && r.max_files_in_flight <= r.file_limit;
  };

  fixture::Server srv(files);
  const auto root = testing_support::temp_dir("accept-transfer");
  int good = 0;
  std::string first_bad;
  for (const auto& theta : full_lattice()) {
    const auto dest = root + "/" + std::to_string(theta.cc) + "_" + std::to_string(theta.p) + "_" +
                      std::to_string(theta.bs);
    const auto r = netio::execute(plan_for(srv, theta), dest);
    if (intact(r)) ++good;
    else if (first_bad.empty()) first_bad = to_string(theta);
    fs::remove_all(dest);
  }

  fixture::Options o;
  o.ranges = false;
  fixture::Server plain(files, o);
  const auto r = netio::execute(plan_for(plain, {4, 4, 8192}), root + "/fallback");
  bool fallback = intact(r);
  for (const auto& f : r.files)
    if (f.bytes > 1) fallback &= f.range_fallback && f.p_used == 1;
  fs::remove_all(root);
  return {good == 252 && fallback,
          fmt("%d/252 lattice transfers intact%s%s; no-Range fixture fallback %s", good,
              first_bad.empty() ? "" : ", first failure ", first_bad.c_str(),
              fallback ? "p=1 and intact" : "FAILED")};
}

// 8. Amortization on the default video scenario.
Outcome amortization(double wall, const ParamSetting& video_theta) {
  const sim::NetScenario scn;
  const sim::PowerModel pm;
  const auto good = service::amortization_check(
      service::estimate_costs(scn, pm, sim::DatasetClass::video, video_theta, wall, 100));
  const auto same = service::amortization_check(
      service::estimate_costs(scn, pm, sim::DatasetClass::video, broker::kDefaultParams, wall, 100));
  return {good.holds && !same.holds,
          fmt("theta_opt %s: holds=%d margin %.1f J; theta_opt = default: holds=%d",
              to_string(video_theta).c_str(), good.holds, good.margin, same.holds)};
}

// 9. Model blob over HTTP, ETag revalidation, per-line rejection counts.
Outcome wire_service() {
  const auto dir = testing_support::temp_dir("accept-service");
  service::ServiceConfig cfg;
  cfg.port = 0;
  cfg.data_dir = dir;
  cfg.pipeline_interval = 0;
  service::Service svc(cfg);
  httplib::Client cli("127.0.0.1", svc.start());

  const auto logs = sim::generate_logs({}, {}, full_lattice(), 1, 9);
  std::string body;
  for (int i = 0; i < 1000; ++i) {
    if (i == 0) body += "not json at all\n";
    else if (i == 400) body += "{\"fs\": 1e6, \"n_files\": \"many\"}\n";
    else if (i == 999) body += "[1, 2, 3]\n";
    else body += to_jsonl(logs[static_cast<std::size_t>(i % logs.size())]) + "\n";
  }
  auto res = cli.Post("/v1/logs", body, "application/x-ndjson");
  const auto counts = res ? nlohmann::json::parse(res->body) : nlohmann::json{};
  const bool count_ok = res && res->status == 200 && counts["accepted"] == 997 && counts["rejected"] == 3;

  res = cli.Post("/v1/perf-drop", "", "text/plain");
  const bool drop_ok = res && res->status == 202;
  svc.wait_idle();
  res = cli.Get("/v1/model");
  bool blob_ok = false;
  std::string etag;
  if (res && res->status == 200) {
    const std::vector<std::uint8_t> blob(res->body.begin(), res->body.end());
    const auto pub = svc.published();
    blob_ok = blob.size() == 1412 && pub && blob == learn::serialize(pub->model) &&
              learn::serialize(learn::deserialize(blob)) == blob;
    etag = res->get_header_value("ETag");
  }
  res = cli.Get("/v1/model", {{"If-None-Match", etag}});
  const bool etag_ok = !etag.empty() && res && res->status == 304 && res->body.empty();
  svc.stop();
  fs::remove_all(dir);
  return {count_ok && drop_ok && blob_ok && etag_ok,
          fmt("upload accepted %d rejected %d; blob round trip %s; ETag %s -> %s",
              counts.value("accepted", -1), counts.value("rejected", -1), blob_ok ? "bit-exact" : "MISMATCH",
              etag.c_str(), etag_ok ? "304" : "no 304")};
}

}  // namespace

int main() {
  rlimit lim{};
  if (getrlimit(RLIMIT_NOFILE, &lim) == 0) {
    lim.rlim_cur = lim.rlim_max;
    setrlimit(RLIMIT_NOFILE, &lim);
  }

  double default_wall = 0;
  ParamSetting video_theta{};
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "spline correctness", 10, spline_correctness},
      {2, "optimizer-oracle equivalence", 30, optimizer_equivalence},
      {3, "end-to-end pipeline", 300, [&] { return end_to_end_pipeline(default_wall, video_theta); }},
      {4, "learning module", 120, learning_module},
      {5, "energy math", 0, energy_math},
      {6, "scheduler", 0, scheduler},
      {7, "transfer integrity", 180, transfer_integrity},
      {8, "amortization", 0, [&] { return amortization(default_wall, video_theta); }},
      {9, "wire/service", 0, wire_service},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %d %-30s %s  %s  [%.2f s%s]\n", c.id, c.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs,
                c.budget_s > 0 ? fmt(" / %.0f s budget", c.budget_s).c_str() : "");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
