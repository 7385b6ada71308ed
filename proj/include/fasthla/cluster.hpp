#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fasthla/types.hpp"

namespace fasthla {

inline constexpr double kDefaultLogThreshold = 1.0;
inline constexpr double kDefaultFileThresholdDecades = 1.0;

struct LogCluster {
  std::vector<std::size_t> members;   // indices into the input, ascending
  std::array<double, 3> centroid{};   // standardized [log10 fs, log10 rtt, log10 bw]
};

struct FileEntry {
  std::string url;
  std::uint64_t size = 0;

  friend bool operator==(const FileEntry&, const FileEntry&) = default;
};

struct FileCluster {
  std::vector<FileEntry> files;
  double mean_size = 0;
};

// Partitions by (device model, interface), then Ward-linkage agglomeration on
// standardized [log10 fs, log10 t_rtt, log10 bw] within each partition,
// merging while the closest pair is at Ward distance <= threshold.
// Clusters are returned ordered by their smallest member index.
std::vector<LogCluster> cluster_logs(std::span<const TransferLog> logs,
                                     double threshold = kDefaultLogThreshold);

// Complete linkage on |log10 size_a - log10 size_b|, cut at threshold.
// Clusters ordered by descending mean size; files keep input order.
std::vector<FileCluster> cluster_files(
    std::span<const FileEntry> dataset,
    double threshold_decades = kDefaultFileThresholdDecades);

// Greedy Ward agglomeration on weighted points (weight = multiplicity).
// Returns a cluster label per point; ties broken by lowest pair indices.
std::vector<std::size_t> ward_agglomerate(
    std::span<const std::vector<double>> points,
    std::span<const std::size_t> weights, double threshold);

}  // namespace fasthla
