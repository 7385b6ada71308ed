#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fasthla/types.hpp"

namespace fasthla {

inline constexpr double kIqrFence = 1.5;
inline constexpr std::size_t kIqrMinGroup = 5;

// Drops failed/aborted transfers, throughput above link bandwidth, logs with
// non-finite or non-positive required fields, and per-group IQR outliers on
// throughput (group = device model, interface, params). Outlier removal is
// repeated until no log is removed, so the result is a fixpoint.
std::vector<TransferLog> preprocess_logs(std::span<const TransferLog> raw);

// Quantile by linear interpolation between closest ranks. Input need not be
// sorted. q in [0, 1].
double quantile(std::vector<double> values, double q);

std::string to_jsonl(const TransferLog& log);
TransferLog parse_log_line(std::string_view line);  // throws Errc::parse

struct JsonlBatch {
  std::vector<TransferLog> logs;
  std::size_t rejected = 0;  // malformed non-blank lines
};

JsonlBatch parse_jsonl(std::string_view text);
JsonlBatch read_jsonl_file(const std::string& path);
void append_jsonl_file(const std::string& path, std::span<const TransferLog> logs);
std::string to_jsonl(std::span<const TransferLog> logs);

std::string_view to_string(NetIf v);
std::string_view to_string(TransferStatus v);

}  // namespace fasthla
