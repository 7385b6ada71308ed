#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fasthla/cluster.hpp"
#include "fasthla/learn.hpp"
#include "fasthla/types.hpp"

namespace fasthla::broker {

inline constexpr ParamSetting kDefaultParams{2, 1, 8 * 1024};
inline constexpr int kDefaultUserLimit = 32;
inline constexpr std::size_t kCacheCapacity = 256;
inline constexpr std::size_t kLogBufferCapacity = 10'000;
inline constexpr std::size_t kLogBatchSize = 500;
inline constexpr double kDropRatio = 0.5;
inline constexpr std::size_t kDropSeconds = 5;

struct NetProbe {
  double rtt_ms = 0;
  double bw_mbps = 0;
};

struct TransferRequest {
  std::vector<FileEntry> dataset;
  double avg_file_size = 0;
  std::size_t num_files = 0;
  int user_limit = kDefaultUserLimit;

  static TransferRequest from_dataset(std::vector<FileEntry> files,
                                      int user_limit = kDefaultUserLimit);
  // num_files matches the dataset; avg_file_size within 1% of the real mean.
  void validate() const;
};

// Bucketing helpers; each is total over its input domain.
int bw_bucket(double bw_mbps);      // exponent of the nearest power of two
int rtt_bucket(double rtt_ms);      // 0: <50, 1: 50-150, 2: 150-400, 3: >400
int size_class(double mean_bytes);  // floor(log10 mean)

struct NetConditionKey {
  NetIf net_if = NetIf::wifi;
  int bw_bucket = 0;
  int rtt_bucket = 0;
  std::string model;
  int size_class = 0;

  auto operator<=>(const NetConditionKey&) const = default;
  bool operator==(const NetConditionKey&) const = default;
};

NetConditionKey make_key(const TransferRequest& req, const NetProbe& probe,
                         const DeviceInfo& device, NetIf net_if);

// "wifi|bw=6|rtt=1|size=5|model=pixel-7"; used as the /v1/params query key.
std::string key_to_string(const NetConditionKey& key);
NetConditionKey parse_key(std::string_view text);  // throws Errc::parse

struct CacheEntry {
  ParamSetting theta;
  double efficiency = 0;
  double throughput = 0;  // observed Mbps, used as the drop-detection baseline
  std::int64_t ts = 0;
};

// Key -> best known setting, LRU-bounded. Safe for one writer with
// concurrent readers; each call is atomic.
class ParamCache {
 public:
  explicit ParamCache(std::size_t capacity = kCacheCapacity) : capacity_(capacity) {}

  // Marks the entry most recently used.
  std::optional<CacheEntry> lookup(const NetConditionKey& key);
  std::optional<CacheEntry> peek(const NetConditionKey& key) const;

  // Stores the entry unless an existing entry records a higher efficiency.
  // Returns whether the entry was written.
  bool record(const NetConditionKey& key, const CacheEntry& entry);

  std::size_t size() const;

  // JSONL, least recently used first. load() merges the file into this
  // cache; a missing file is not an error and damaged lines are skipped.
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  using Order = std::list<NetConditionKey>;
  struct Slot {
    CacheEntry entry;
    Order::iterator pos;
  };

  mutable std::mutex mu_;
  std::size_t capacity_;
  Order order_;  // front = least recently used
  std::map<NetConditionKey, Slot> slots_;
};

enum class ParamSource { cache, lm, default_setting };
std::string_view to_string(ParamSource s);

struct Resolution {
  ParamSetting theta;
  ParamSource source = ParamSource::default_setting;
};

// Cache, then learned model, then kDefaultParams.
Resolution resolve_params(const TransferRequest& req, const NetProbe& probe,
                          const DeviceInfo& device, NetIf net_if, ParamCache& cache,
                          const learn::LearnedModel* lm);

struct ThroughputSample {
  double t = 0;  // s
  double mbps = 0;
};

// Samples are 1 Hz. True when throughput stays below kDropRatio * predicted
// for kDropSeconds consecutive samples. Throws Errc::insufficient_window for
// fewer than kDropSeconds samples.
bool detect_perf_drop(double predicted_th, std::span<const ThroughputSample> window);

struct PlanEntry {
  FileCluster cluster;
  ParamSetting theta;
  bool scaled = false;
};

struct SchedulePlan {
  std::vector<PlanEntry> entries;
  int total_cc() const;
  std::size_t file_count() const;
};

// Resolves parameters for a per-cluster request.
using ClusterResolver = std::function<ParamSetting(const TransferRequest& cluster_req)>;

// Proportional scale-down of concurrency when the clusters together exceed
// `user_limit`: cc_i <- max(1, floor(cc_i * f)) with f = limit / sum cc. If the
// floor at 1 makes the total overshoot, f is lowered to the largest value
// whose total fits, so larger clusters never end below smaller ones. Throws
// Errc::invalid_argument when the limit is below the number of entries.
void scale_to_limit(std::vector<PlanEntry>& entries, int user_limit);

// Clusters the dataset by file size, resolves a setting per cluster (mean
// cluster size as avg_file_size) and scales concurrency to the user limit.
// Throws Errc::empty_plan for an empty dataset.
SchedulePlan schedule_mixed(const TransferRequest& req, const ClusterResolver& resolve,
                            double threshold_decades = kDefaultFileThresholdDecades);

// Sends one JSONL batch; returns false on failure.
using LogTransport = std::function<bool(const std::string& jsonl)>;

// Fixed-capacity ring of pending logs. When full, the oldest log is dropped.
class LogBuffer {
 public:
  explicit LogBuffer(std::size_t capacity = kLogBufferCapacity) : capacity_(capacity) {}

  void push(TransferLog log);
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }
  std::vector<TransferLog> snapshot() const;

  // Sends oldest-first in batches of at most kLogBatchSize. Stops at the first
  // failed batch; unsent logs stay buffered. Returns the number sent.
  std::size_t flush(const LogTransport& transport);

 private:
  mutable std::mutex mu_;
  std::size_t capacity_;
  std::deque<TransferLog> logs_;
};

}  // namespace fasthla::broker
