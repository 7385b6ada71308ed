#include <cmath>
#include <random>

#include "doctest.h"
#include "fasthla/error.hpp"
#include "fasthla/learn.hpp"
#include "fasthla/sim.hpp"
#include "oracles.hpp"

using namespace fasthla;
using namespace fasthla::learn;

namespace {

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::io;
}

std::vector<TrainingRow> rows_of(const std::vector<sim::CorpusRow>& c) {
  std::vector<TrainingRow> out;
  for (const auto& r : c) out.push_back(r.row);
  return out;
}

std::vector<TrainingRow> constant_rows(std::size_t n, ParamSetting theta, std::uint64_t seed) {
  auto corpus = sim::synthetic_corpus(n, seed);
  auto rows = rows_of(corpus);
  for (auto& r : rows) r.theta = theta;
  return rows;
}

// Pick the k nearest by repeated full scans; ties go to the lower index.
ParamSetting naive_knn(const std::vector<TrainingRow>& rows, const FeatureVector& f, std::size_t k) {
  const double n = static_cast<double>(rows.size());
  double mean[6] = {}, sd[6] = {};
  for (const auto& r : rows)
    for (int i = 0; i < 6; ++i) mean[i] += r.f.v[i];
  for (auto& m : mean) m /= n;
  for (const auto& r : rows)
    for (int i = 0; i < 6; ++i) sd[i] += std::pow(r.f.v[i] - mean[i], 2);
  for (auto& s : sd) s = s > 0 ? std::sqrt(s / n) : 1.0;
  auto dist = [&](const TrainingRow& r) {
    double s = 0;
    for (int i = 0; i < 6; ++i) s += std::pow((r.f.v[i] - f.v[i]) / sd[i], 2);
    return std::sqrt(s);
  };
  std::vector<bool> used(rows.size(), false);
  std::vector<std::pair<double, std::size_t>> near;
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = rows.size();
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (!used[r] && (best == rows.size() || dist(rows[r]) < dist(rows[best]))) best = r;
    used[best] = true;
    near.push_back({dist(rows[best]), best});
  }
  const bool exact = near.front().first == 0;
  double votes[3][7] = {};
  for (auto [d, r] : near) {
    if (exact && d > 0) continue;
    const double w = exact ? 1 : 1 / d;
    votes[0][rows[r].theta.cc_level()] += w;
    votes[1][rows[r].theta.p_level()] += w;
    votes[2][rows[r].theta.bs_level()] += w;
  }
  int lv[3];
  for (int o = 0; o < 3; ++o) {
    lv[o] = 0;
    for (int l = 1; l < 7; ++l)
      if (votes[o][l] > votes[o][lv[o]]) lv[o] = l;
  }
  return ParamSetting::from_levels(lv[0], lv[1], lv[2]);
}

}  // namespace

TEST_CASE("blob size arithmetic") {
  CHECK(kWeightCount == 6 * 16 + 16 + 16 * 3 + 3);
  CHECK(kBlobSize == 4 + 4 + 4 + 175 * 8);
}

TEST_CASE("feature vector") {
  const auto f = make_features(1000, 10, 100, 1, NetIf::cellular, 3);
  CHECK(f.v == std::array<double, 6>{3, 1, 2, 0, 1, 3});
}

TEST_CASE("forward pass matches the flat-layout oracle") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  LearnedModel m;
  for (auto& w : m.weights) w = u(rng);
  for (int i = 0; i < 6; ++i) {
    m.feature_mean[i] = u(rng);
    m.feature_scale[i] = 0.5 + std::abs(u(rng));
  }
  for (int k = 0; k < 50; ++k) {
    FeatureVector f;
    for (auto& v : f.v) v = 3 * u(rng);
    const auto got = m.forward(f);
    const auto want = oracle::forward(m.weights, m.feature_mean, m.feature_scale, f.v);
    for (int o = 0; o < 3; ++o) CHECK(std::abs(got[o] - want[o]) < 1e-12);
  }
}

TEST_CASE("level rounding and clamping") {
  CHECK(levels_to_params({-0.4, 5.7, 3.2}) == ParamSetting{1, 32, 8 * 1024});
  CHECK(levels_to_params({9, -3, 8}) == ParamSetting{32, 1, 64 * 1024});
  CHECK(levels_to_params({2.49, 2.51, 0.5}).cc == 4);
}

TEST_CASE("constant target is learned exactly") {
  const ParamSetting target{8, 4, 16 * 1024};
  const auto rows = constant_rows(60, target, 3);
  const auto m = train(rows, 1);
  CHECK(m.version == 1);
  CHECK(accuracy(m, rows) == 1.0);
  for (const auto& r : sim::synthetic_corpus(20, 99)) CHECK(predict(m, r.row.f) == target);
}

TEST_CASE("training errors and determinism") {
  const auto rows = constant_rows(9, {}, 1);
  CHECK(code_of([&] { train(rows, 1); }) == Errc::insufficient_data);
  const auto more = rows_of(sim::synthetic_corpus(40, 5));
  TrainOptions o;
  o.epochs = 200;
  CHECK(train(more, 7, nullptr, o) == train(more, 7, nullptr, o));
  CHECK_FALSE(train(more, 7, nullptr, o).weights == train(more, 8, nullptr, o).weights);
}

TEST_CASE("retraining with zero epochs keeps the weights") {
  const auto rows = rows_of(sim::synthetic_corpus(40, 5));
  TrainOptions o;
  o.epochs = 100;
  const auto m = train(rows, 1, nullptr, o);
  o.epochs = 0;
  const auto again = train(rows, 2, &m, o);
  CHECK(again.weights == m.weights);
  CHECK(again.feature_mean == m.feature_mean);
  CHECK(again.version == m.version + 1);
}

TEST_CASE("synthetic corpus is learned to high accuracy") {
  const auto corpus = sim::synthetic_corpus(600, 42);
  std::vector<TrainingRow> train_rows, test_rows;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (i < 500 ? train_rows : test_rows).push_back(corpus[i].row);
  const auto m = train(train_rows, 42);
  CHECK(accuracy(m, test_rows) >= 0.85);
}

TEST_CASE("r squared") {
  const std::vector<double> a{1, 2, 3};
  CHECK(r_squared(a, a) == 1.0);
  CHECK(r_squared(a, std::vector<double>{2, 2, 2}) == 0.0);
  CHECK(r_squared(a, std::vector<double>{1, 2, 4}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(code_of([] { r_squared(std::vector<double>{4, 4}, std::vector<double>{1, 2}); }) ==
        Errc::undefined_variance);
  CHECK(code_of([&] { r_squared(a, std::vector<double>{1}); }) == Errc::invalid_argument);
  CHECK(code_of([] { r_squared(std::vector<double>{}, std::vector<double>{}); }) ==
        Errc::invalid_argument);
}

TEST_CASE("accuracy counts exact matches") {
  LearnedModel m;  // all-zero weights: predicts levels (0, 0, 0)
  for (auto& s : m.feature_scale) s = 1;
  auto rows = rows_of(sim::synthetic_corpus(30, 6));
  int hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i % 3 == 0) rows[i].theta = {1, 1, 1024};
    if (rows[i].theta == ParamSetting{1, 1, 1024}) ++hits;
  }
  CHECK(accuracy(m, rows) == doctest::Approx(hits / 30.0));
  CHECK(code_of([&] { accuracy(m, std::vector<TrainingRow>{}); }) == Errc::invalid_argument);
}

TEST_CASE("serialization round trip and size") {
  for (std::size_t n : {10, 20, 35}) {
    TrainOptions o;
    o.epochs = 50;
    const auto m = train(rows_of(sim::synthetic_corpus(n, n)), n, nullptr, o);
    const auto blob = serialize(m);
    CHECK(blob.size() == 1412);
    CHECK(deserialize(blob) == m);
    CHECK(serialize(deserialize(blob)) == blob);
  }
}

TEST_CASE("serialization layout is little-endian") {
  LearnedModel m;
  m.version = 0x01020304;
  m.weights[0] = 1.0;
  const auto b = serialize(m);
  CHECK(std::string(b.begin(), b.begin() + 4) == "FHLA");
  CHECK(b[4] == 0x04);
  CHECK(b[7] == 0x01);
  CHECK(b[8] == 163);
  CHECK(b[9] == 0);
  // 1.0 = 0x3ff0000000000000
  CHECK(b[12 + 6] == 0xf0);
  CHECK(b[12 + 7] == 0x3f);
}

TEST_CASE("deserialization errors") {
  const auto good = serialize(LearnedModel{});
  auto bad = good;
  bad[0] = 'X';
  CHECK(code_of([&] { deserialize(bad); }) == Errc::bad_magic);
  bad = good;
  bad[8] = 162;
  CHECK(code_of([&] { deserialize(bad); }) == Errc::wrong_count);
  bad = good;
  bad.pop_back();
  CHECK(code_of([&] { deserialize(bad); }) == Errc::truncated);
  CHECK(code_of([] { deserialize(std::vector<std::uint8_t>{'F', 'H'}); }) == Errc::truncated);
}

TEST_CASE("knn oracle") {
  const auto rows = rows_of(sim::synthetic_corpus(80, 12));
  CHECK(knn_oracle(rows, rows[17].f) == rows[17].theta);
  const auto same = constant_rows(15, {4, 4, 4096}, 2);
  CHECK(knn_oracle(same, same[0].f, same.size()) == ParamSetting{4, 4, 4096});
  for (const auto& q : sim::synthetic_corpus(40, 13)) {
    CHECK(knn_oracle(rows, q.row.f, 3) == naive_knn(rows, q.row.f, 3));
    CHECK(knn_oracle(rows, q.row.f, 7) == naive_knn(rows, q.row.f, 7));
  }
}
