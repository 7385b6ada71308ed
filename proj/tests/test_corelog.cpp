#include <cmath>
#include <random>

#include "doctest.h"
#include "fasthla/energy.hpp"
#include "fasthla/error.hpp"
#include "fasthla/logs.hpp"
#include "fasthla/sim.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fasthla;
using testing_support::make_log;

namespace {

PowerTrace trace_of(std::vector<std::pair<double, double>> pts, double base) {
  PowerTrace t;
  for (auto [s, w] : pts) t.samples.push_back({s, w});
  t.p_base = base;
  t.window = {t.samples.front().t, t.samples.back().t};
  return t;
}

PowerTrace random_trace(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> dt(0.01, 2.0), w(0.0, 6.0), base(0.5, 3.0);
  PowerTrace t;
  t.p_base = base(rng);
  double s = dt(rng);
  for (std::size_t i = 0; i < n; ++i) {
    t.samples.push_back({s, w(rng)});
    s += dt(rng);
  }
  t.window = {t.samples.front().t - 0.5, t.samples.back().t};
  return t;
}

double oracle_energy(const PowerTrace& t) {
  std::vector<double> ts, ws;
  for (const auto& s : t.samples) {
    ts.push_back(s.t);
    ws.push_back(s.watts);
  }
  return oracle::trapezoid(ts, ws, t.p_base);
}

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::io;
}

}  // namespace

TEST_CASE("parameter lattice") {
  CHECK(full_lattice().size() == 252);
  CHECK(ParamSetting{32, 32, 64 * 1024}.is_feasible());
  CHECK_FALSE(ParamSetting{3, 1, 8192}.is_feasible());
  CHECK_FALSE(ParamSetting{1, 1, 1000}.is_feasible());
  CHECK(ParamSetting::from_levels(4, 0, 6) == ParamSetting{16, 1, 64 * 1024});
  CHECK(ParamSetting{8, 4, 2048}.bs_level() == 1);
  CHECK(code_of([] { (void)ParamSetting{3, 1, 1024}.cc_level(); }) == Errc::domain);
}

TEST_CASE("dynamic energy of flat traces") {
  CHECK(dynamic_energy(trace_of({{0, 2.0}, {1, 2.0}, {2, 2.0}}, 2.0)) == 0.0);
  CHECK(dynamic_energy(trace_of({{0, 3.0}, {1, 3.0}, {2, 3.0}}, 2.0)) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("power below base clamps to zero") {
  CHECK(dynamic_energy(trace_of({{0, 1.0}, {1, 1.0}}, 2.0)) == 0.0);
  // Clamp per sample, then trapezoid: (0 + 2) / 2 * 1.
  CHECK(dynamic_energy(trace_of({{0, 1.0}, {1, 4.0}}, 2.0)) == doctest::Approx(1.0));
}

TEST_CASE("trace validation") {
  CHECK(code_of([] { dynamic_energy(trace_of({{0, 3.0}}, 2.0)); }) == Errc::empty_trace);
  CHECK(code_of([] { dynamic_energy(trace_of({{0, 3.0}, {0, 3.0}}, 2.0)); }) ==
        Errc::malformed_trace);
  CHECK(code_of([] { dynamic_energy(trace_of({{1, 3.0}, {0.5, 3.0}}, 2.0)); }) ==
        Errc::malformed_trace);
  CHECK(code_of([] { dynamic_energy(trace_of({{0, -1.0}, {1, 3.0}}, 2.0)); }) ==
        Errc::malformed_trace);
  auto t = trace_of({{0, 3.0}, {1, 3.0}}, 2.0);
  t.window = {0.5, 1.0};
  CHECK(code_of([&] { dynamic_energy(t); }) == Errc::malformed_trace);
}

TEST_CASE("dynamic energy matches the trapezoid oracle") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    const auto t = random_trace(rng, 100);
    const double want = oracle_energy(t);
    const double got = dynamic_energy(t);
    CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("simulated trace energy") {
  const sim::NetScenario scn;
  const sim::PowerModel pm;
  const auto sizes = sim::class_dataset(sim::DatasetClass::image);
  const auto r = sim::simulate(scn, pm, {4, 2, 16384}, sizes);
  REQUIRE(r.trace.samples.size() >= 2);
  const double ed = dynamic_energy(r.trace);
  CHECK(std::abs(ed - oracle_energy(r.trace)) <= 1e-9 * ed);
  // Constant draw above base: E_b + E_d equals the raw integral of P dt.
  const auto b = total_energy(base_energy(r.trace), ed);
  std::vector<double> ts, ws;
  for (const auto& s : r.trace.samples) {
    ts.push_back(s.t);
    ws.push_back(s.watts);
  }
  const double full = oracle::trapezoid(ts, ws, 0.0);
  CHECK(std::abs(b.e_total - full) <= 1e-9 * full);
  CHECK(ed / r.wall_time == doctest::Approx(r.dynamic_power).epsilon(1e-12));
}

TEST_CASE("total energy identity") {
  CHECK(total_energy(0, 0).e_total == 0);
  CHECK(total_energy(10, 5).e_total == 15);
  CHECK(code_of([] { total_energy(-1, 2); }) == Errc::domain);
  CHECK(code_of([] { total_energy(1, -2); }) == Errc::domain);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1e4);
  for (int k = 0; k < 1000; ++k) {
    const double a = u(rng), d = u(rng);
    const auto b = total_energy(a, d);
    CHECK(b.e_base == a);
    CHECK(b.e_dynamic == d);
    CHECK(std::abs(b.e_total - (b.e_base + b.e_dynamic)) <= 1e-9 * b.e_total);
  }
}

TEST_CASE("dynamic energy is monotone in pointwise power") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> bump(0.0, 2.0);
  for (int k = 0; k < 200; ++k) {
    auto t = random_trace(rng, 20);
    const double before = dynamic_energy(t);
    CHECK(before >= 0);
    t.samples[rng() % t.samples.size()].watts += bump(rng);
    CHECK(dynamic_energy(t) >= before);
  }
}

TEST_CASE("quantile uses linear interpolation between closest ranks") {
  const std::vector<double> v{10, 11, 12, 9, 300};
  CHECK(quantile(v, 0.25) == 10.0);
  CHECK(quantile(v, 0.75) == 12.0);
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({5}, 0.5) == 5.0);
}

TEST_CASE("preprocess record rules") {
  std::vector<TransferLog> logs{make_log(120, 100), make_log(50, 100), make_log(10, 100)};
  logs[2].status = TransferStatus::aborted;
  const auto out = preprocess_logs(logs);
  REQUIRE(out.size() == 1);
  CHECK(out[0].throughput == 50);

  auto bad = make_log();
  bad.duration = 0;
  CHECK(preprocess_logs(std::vector{bad}).empty());
  bad = make_log();
  bad.fs = NAN;
  CHECK(preprocess_logs(std::vector{bad}).empty());
  bad = make_log();
  bad.status = TransferStatus::failed;
  CHECK(preprocess_logs(std::vector{bad}).empty());
  bad = make_log();
  bad.params = {3, 1, 8192};
  CHECK(preprocess_logs(std::vector{bad}).empty());
}

TEST_CASE("IQR outlier removal per group") {
  std::vector<TransferLog> logs;
  for (double th : {10.0, 11.0, 12.0, 9.0, 300.0}) logs.push_back(make_log(th, 1000));
  // Q1 = 10, Q3 = 12, fence = 15: 300 lies far above.
  const auto out = preprocess_logs(logs);
  REQUIRE(out.size() == 4);
  for (const auto& l : out) CHECK(l.throughput < 300);

  // A different parameter setting is a different group; groups of < 5 skip IQR.
  logs.push_back(make_log(900, 1000, {2, 1, 8192}));
  CHECK(preprocess_logs(logs).size() == 5);
}

TEST_CASE("preprocess keeps order and is idempotent") {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> th(2.5, 0.6);
  std::uniform_int_distribution<int> st(0, 9), lvl(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TransferLog> logs;
    for (int i = 0; i < 120; ++i) {
      auto l = make_log(th(rng), 40, ParamSetting::from_levels(lvl(rng), lvl(rng), 3));
      l.timestamp = i;
      if (st(rng) == 0) l.status = TransferStatus::aborted;
      logs.push_back(l);
    }
    const auto once = preprocess_logs(logs);
    CHECK(preprocess_logs(once) == once);
    for (std::size_t i = 1; i < once.size(); ++i) CHECK(once[i - 1].timestamp < once[i].timestamp);
    for (const auto& l : once) CHECK(l.throughput <= l.bw);
  }
}

TEST_CASE("JSONL round trip and per-line rejection") {
  auto a = make_log(12.5, 100, {4, 2, 16384});
  auto b = make_log(7, 50);
  b.pw.reset();
  b.net_if = NetIf::cellular;
  const std::vector<TransferLog> logs{a, b};
  const auto text = to_jsonl(logs);
  const auto back = parse_jsonl(text);
  CHECK(back.rejected == 0);
  REQUIRE(back.logs.size() == 2);
  CHECK(back.logs[0] == a);
  CHECK(back.logs[1] == b);
  CHECK_FALSE(back.logs[1].pw.has_value());

  const auto mixed = parse_jsonl(to_jsonl(a) + "\n{not json\n\n" + R"({"fs": 1})" + "\n" +
                                 to_jsonl(b) + "\n");
  CHECK(mixed.logs.size() == 2);
  CHECK(mixed.rejected == 2);
  CHECK(code_of([] { parse_log_line("[]"); }) == Errc::parse);
}

TEST_CASE("unknown JSONL fields are ignored") {
  auto line = to_jsonl(make_log());
  line.insert(1, R"("extra_field": [1, 2, 3], )");
  CHECK(parse_log_line(line) == make_log());
}

TEST_CASE("energy per 100 MB needs power data") {
  auto l = make_log();
  l.pw = 2.0;
  l.duration = 5;
  l.fs = 1e6;
  l.n_files = 20;
  CHECK(*energy_per_100mb(l) == doctest::Approx(2.0 * 5 * 1e8 / 2e7));
  l.pw.reset();
  CHECK_FALSE(energy_per_100mb(l).has_value());
}
