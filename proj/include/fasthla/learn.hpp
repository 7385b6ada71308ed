#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fasthla/types.hpp"

namespace fasthla::learn {

inline constexpr std::size_t kInputs = 6;
inline constexpr std::size_t kHidden = 16;
inline constexpr std::size_t kOutputs = 3;
inline constexpr std::size_t kWeightCount =
    kInputs * kHidden + kHidden + kHidden * kOutputs + kOutputs;  // 163
inline constexpr std::size_t kStandardizationCount = 2 * kInputs;  // 12
inline constexpr std::size_t kBlobSize =
    12 + (kWeightCount + kStandardizationCount) * 8;  // 1412

static_assert(kWeightCount == 163);
static_assert(kBlobSize == 1412);

// [log10 fs, log10 n_files, log10 t_rtt, log10 bw, net_if (cellular = 1),
//  cpu_class]
struct FeatureVector {
  std::array<double, kInputs> v{};

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

FeatureVector make_features(double fs, double n_files, double t_rtt_ms,
                            double bw_mbps, NetIf net_if, int cpu_class);
FeatureVector features_of(const TransferLog& log);

struct TrainingRow {
  FeatureVector f;
  ParamSetting theta;
};

// 6-16-3 network: tanh hidden layer, linear outputs that regress the level
// indices (log2 cc, log2 p, log2(bs / 1 KiB)).
//
// Weight layout, row-major: W1[16][6], b1[16], W2[3][16], b2[3].
struct LearnedModel {
  std::uint32_t version = 0;
  std::array<double, kWeightCount> weights{};
  std::array<double, kInputs> feature_mean{};
  std::array<double, kInputs> feature_scale{};  // standard deviation, never 0

  std::array<double, kOutputs> forward(const FeatureVector& f) const;

  friend bool operator==(const LearnedModel&, const LearnedModel&) = default;
};

struct TrainOptions {
  int epochs = 2000;
  double learning_rate = 0.01;
};

// Full-batch gradient descent on the mean (over rows) squared error summed
// over the three outputs. With `prior`, training resumes from its weights and
// standardization; otherwise weights start from uniform(-0.5, 0.5) drawn with
// `seed`. The returned version is prior's + 1 (or 1).
// Throws Errc::insufficient_data for fewer than 10 rows.
LearnedModel train(std::span<const TrainingRow> rows, std::uint64_t seed,
                   const LearnedModel* prior = nullptr,
                   const TrainOptions& opt = {});

// Rounds each raw output to the nearest level index and clamps it into the
// lattice.
ParamSetting levels_to_params(const std::array<double, kOutputs>& raw);
ParamSetting predict(const LearnedModel& m, const FeatureVector& f);

// Inverse-distance-weighted per-axis vote over the k nearest rows, in
// features standardized by the rows' own mean and deviation. Exact matches
// (distance 0) outvote everything else. Vote ties go to the smaller level.
ParamSetting knn_oracle(std::span<const TrainingRow> rows, const FeatureVector& f,
                        std::size_t k = 3);

// 1 - SS_res / SS_tot. Throws Errc::invalid_argument on length mismatch or
// empty input and Errc::undefined_variance when all actuals are equal.
double r_squared(std::span<const double> actual, std::span<const double> predicted);

// Fraction of rows predicted exactly on all three axes.
// Throws Errc::invalid_argument for an empty set.
double accuracy(const LearnedModel& m, std::span<const TrainingRow> rows);

// "FHLA" | u32 version | u32 weight count | 175 f64, all little-endian.
std::vector<std::uint8_t> serialize(const LearnedModel& m);
// Throws Errc::bad_magic, Errc::wrong_count or Errc::truncated.
LearnedModel deserialize(std::span<const std::uint8_t> blob);

}  // namespace fasthla::learn
