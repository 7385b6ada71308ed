#include "fasthla/learn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "fasthla/error.hpp"

namespace fasthla::learn {

namespace {

constexpr std::size_t kW1 = 0;
constexpr std::size_t kB1 = kW1 + kInputs * kHidden;
constexpr std::size_t kW2 = kB1 + kHidden;
constexpr std::size_t kB2 = kW2 + kHidden * kOutputs;
constexpr std::array<int, kOutputs> kMaxLevel{5, 5, 6};

std::array<double, kInputs> standardize(const LearnedModel& m, const FeatureVector& f) {
  std::array<double, kInputs> z{};
  for (std::size_t i = 0; i < kInputs; ++i)
    z[i] = (f.v[i] - m.feature_mean[i]) / m.feature_scale[i];
  return z;
}

std::array<double, kOutputs> target_levels(const ParamSetting& t) {
  return {static_cast<double>(t.cc_level()), static_cast<double>(t.p_level()),
          static_cast<double>(t.bs_level())};
}

}  // namespace

FeatureVector make_features(double fs, double n_files, double t_rtt_ms,
                            double bw_mbps, NetIf net_if, int cpu_class) {
  return {{std::log10(fs), std::log10(n_files), std::log10(t_rtt_ms),
           std::log10(bw_mbps), net_if == NetIf::cellular ? 1.0 : 0.0,
           static_cast<double>(cpu_class)}};
}

FeatureVector features_of(const TransferLog& log) {
  return make_features(log.fs, log.n_files, log.t_rtt, log.bw, log.net_if,
                       log.device.cpu_class);
}

std::array<double, kOutputs> LearnedModel::forward(const FeatureVector& f) const {
  const auto z = standardize(*this, f);
  std::array<double, kHidden> h{};
  for (std::size_t j = 0; j < kHidden; ++j) {
    double a = weights[kB1 + j];
    for (std::size_t i = 0; i < kInputs; ++i) a += weights[kW1 + j * kInputs + i] * z[i];
    h[j] = std::tanh(a);
  }
  std::array<double, kOutputs> out{};
  for (std::size_t o = 0; o < kOutputs; ++o) {
    double a = weights[kB2 + o];
    for (std::size_t j = 0; j < kHidden; ++j) a += weights[kW2 + o * kHidden + j] * h[j];
    out[o] = a;
  }
  return out;
}

LearnedModel train(std::span<const TrainingRow> rows, std::uint64_t seed,
                   const LearnedModel* prior, const TrainOptions& opt) {
  if (rows.size() < 10) {
    throw Error(Errc::insufficient_data,
                "training needs at least 10 rows, have " + std::to_string(rows.size()));
  }
  const double n = static_cast<double>(rows.size());

  LearnedModel m;
  if (prior) {
    m = *prior;
  } else {
    for (const auto& r : rows)
      for (std::size_t i = 0; i < kInputs; ++i) m.feature_mean[i] += r.f.v[i] / n;
    std::array<double, kInputs> var{};
    for (const auto& r : rows)
      for (std::size_t i = 0; i < kInputs; ++i) {
        const double d = r.f.v[i] - m.feature_mean[i];
        var[i] += d * d / n;
      }
    for (std::size_t i = 0; i < kInputs; ++i)
      m.feature_scale[i] = var[i] > 0 ? std::sqrt(var[i]) : 1.0;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> init(-0.5, 0.5);
    for (auto& w : m.weights) w = init(rng);
  }
  m.version = prior ? prior->version + 1 : 1;

  std::vector<std::array<double, kInputs>> z(rows.size());
  std::vector<std::array<double, kOutputs>> y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    z[r] = standardize(m, rows[r].f);
    y[r] = target_levels(rows[r].theta);
  }

  auto& w = m.weights;
  std::array<double, kWeightCount> grad{};
  std::array<double, kHidden> h{}, dh{};
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    grad.fill(0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < kHidden; ++j) {
        double a = w[kB1 + j];
        for (std::size_t i = 0; i < kInputs; ++i) a += w[kW1 + j * kInputs + i] * z[r][i];
        h[j] = std::tanh(a);
      }
      dh.fill(0.0);
      for (std::size_t o = 0; o < kOutputs; ++o) {
        double a = w[kB2 + o];
        for (std::size_t j = 0; j < kHidden; ++j) a += w[kW2 + o * kHidden + j] * h[j];
        const double g = 2.0 * (a - y[r][o]) / n;
        grad[kB2 + o] += g;
        for (std::size_t j = 0; j < kHidden; ++j) {
          grad[kW2 + o * kHidden + j] += g * h[j];
          dh[j] += g * w[kW2 + o * kHidden + j];
        }
      }
      for (std::size_t j = 0; j < kHidden; ++j) {
        const double g = dh[j] * (1.0 - h[j] * h[j]);
        grad[kB1 + j] += g;
        for (std::size_t i = 0; i < kInputs; ++i) grad[kW1 + j * kInputs + i] += g * z[r][i];
      }
    }
    for (std::size_t k = 0; k < kWeightCount; ++k) w[k] -= opt.learning_rate * grad[k];
  }
  return m;
}

ParamSetting levels_to_params(const std::array<double, kOutputs>& raw) {
  std::array<int, kOutputs> lvl{};
  for (std::size_t o = 0; o < kOutputs; ++o) {
    const double v = std::isfinite(raw[o]) ? raw[o] : 0.0;
    lvl[o] = static_cast<int>(std::clamp(std::round(v), 0.0,
                                         static_cast<double>(kMaxLevel[o])));
  }
  return ParamSetting::from_levels(lvl[0], lvl[1], lvl[2]);
}

ParamSetting predict(const LearnedModel& m, const FeatureVector& f) {
  return levels_to_params(m.forward(f));
}

ParamSetting knn_oracle(std::span<const TrainingRow> rows, const FeatureVector& f,
                        std::size_t k) {
  if (k == 0 || rows.size() < k) {
    throw Error(Errc::insufficient_data, "knn needs at least k rows");
  }
  const double n = static_cast<double>(rows.size());
  std::array<double, kInputs> mean{}, sd{};
  for (const auto& r : rows)
    for (std::size_t i = 0; i < kInputs; ++i) mean[i] += r.f.v[i] / n;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < kInputs; ++i)
      sd[i] += (r.f.v[i] - mean[i]) * (r.f.v[i] - mean[i]) / n;
  for (auto& s : sd) s = s > 0 ? std::sqrt(s) : 1.0;

  std::vector<std::pair<double, std::size_t>> dist(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double d2 = 0;
    for (std::size_t i = 0; i < kInputs; ++i) {
      const double d = (rows[r].f.v[i] - f.v[i]) / sd[i];
      d2 += d * d;
    }
    dist[r] = {std::sqrt(d2), r};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k),
                    dist.end());
  dist.resize(k);
  const bool exact = dist.front().first == 0.0;

  std::array<std::map<int, double>, kOutputs> votes;
  for (const auto& [d, r] : dist) {
    if (exact && d > 0) continue;
    const double weight = exact ? 1.0 : 1.0 / d;
    const auto lv = target_levels(rows[r].theta);
    for (std::size_t o = 0; o < kOutputs; ++o) votes[o][static_cast<int>(lv[o])] += weight;
  }
  std::array<int, kOutputs> lvl{};
  for (std::size_t o = 0; o < kOutputs; ++o) {
    double best = -1;
    for (const auto& [level, weight] : votes[o]) {  // ascending level
      if (weight > best) {
        best = weight;
        lvl[o] = level;
      }
    }
  }
  return ParamSetting::from_levels(lvl[0], lvl[1], lvl[2]);
}

double r_squared(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.empty() || actual.size() != predicted.size()) {
    throw Error(Errc::invalid_argument, "r_squared needs equal non-zero lengths");
  }
  const double mean =
      std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (ss_tot == 0) throw Error(Errc::undefined_variance, "actual values are all equal");
  return 1.0 - ss_res / ss_tot;
}

double accuracy(const LearnedModel& m, std::span<const TrainingRow> rows) {
  if (rows.empty()) throw Error(Errc::invalid_argument, "accuracy of an empty test set");
  std::size_t hits = 0;
  for (const auto& r : rows) hits += predict(m, r.f) == r.theta ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

// ---------------------------------------------------------------------------
// Wire format

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

constexpr std::array<std::uint8_t, 4> kMagic{'F', 'H', 'L', 'A'};

}  // namespace

std::vector<std::uint8_t> serialize(const LearnedModel& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kBlobSize);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, m.version);
  put_u32(out, static_cast<std::uint32_t>(kWeightCount));
  for (double w : m.weights) put_f64(out, w);
  for (double v : m.feature_mean) put_f64(out, v);
  for (double v : m.feature_scale) put_f64(out, v);
  return out;
}

LearnedModel deserialize(std::span<const std::uint8_t> blob) {
  if (blob.size() < 4) throw Error(Errc::truncated, "model blob shorter than its magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), blob.begin())) {
    throw Error(Errc::bad_magic, "model blob does not start with FHLA");
  }
  if (blob.size() < 12) throw Error(Errc::truncated, "model blob header truncated");
  const auto count = get_u32(blob.data() + 8);
  if (count != kWeightCount) {
    throw Error(Errc::wrong_count, "model blob declares " + std::to_string(count) +
                                       " weights, expected " +
                                       std::to_string(kWeightCount));
  }
  if (blob.size() != kBlobSize) {
    throw Error(blob.size() < kBlobSize ? Errc::truncated : Errc::parse, "model blob is " + std::to_string(blob.size()) +
                                     " bytes, expected " + std::to_string(kBlobSize));
  }
  LearnedModel m;
  m.version = get_u32(blob.data() + 4);
  const std::uint8_t* p = blob.data() + 12;
  for (auto& w : m.weights) {
    w = get_f64(p);
    p += 8;
  }
  for (auto& v : m.feature_mean) {
    v = get_f64(p);
    p += 8;
  }
  for (auto& v : m.feature_scale) {
    v = get_f64(p);
    p += 8;
  }
  return m;
}

}  // namespace fasthla::learn
