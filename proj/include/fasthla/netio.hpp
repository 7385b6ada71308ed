#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fasthla/broker.hpp"
#include "fasthla/types.hpp"

namespace fasthla::netio {

struct ByteRange {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;

  friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

// min(p, size) contiguous ranges tiling [0, size); the first size % p ranges
// are one byte longer. size 0 yields no ranges.
std::vector<ByteRange> split_ranges(std::uint64_t size, int p);

struct Url {
  std::string host;
  std::string port = "80";
  std::string path = "/";
};
// http:// only. Throws Errc::invalid_argument.
Url parse_url(const std::string& url);

struct FileResult {
  std::string url;
  std::string path;         // destination
  std::uint64_t bytes = 0;  // bytes written
  double duration = 0;      // s
  std::string sha256;       // hex, completed files only
  ParamSetting theta;       // setting of the file's cluster
  int p_used = 1;
  bool range_fallback = false;
  int retries = 0;
  bool completed = false;
  std::string error;
};

struct TransferReport {
  std::vector<FileResult> files;
  std::uint64_t total_bytes = 0;
  double throughput = 0;  // Mbps, 8 * total_bytes / wall_time / 1e6
  double wall_time = 0;   // s
  std::vector<broker::ThroughputSample> samples;  // 1 Hz
  ParamSetting theta;     // setting of the cluster carrying the most bytes
  std::vector<std::string> errors;
  int max_connections = 0;    // peak simultaneous sockets
  int max_files_in_flight = 0;
  int connection_limit = 0;   // sum of cc * p over the plan
  int file_limit = 0;         // sum of cc over the plan
  double tcp_rcvbuf = 0;      // bytes, SO_RCVBUF of the first data socket
  double cpu_time = 0;        // s of process CPU during the run

  std::size_t completed_count() const;
  std::size_t failed_count() const;
};

struct ExecuteOptions {
  int max_retries = 2;    // per range
  int timeout_ms = 15000; // socket send/receive timeout
};

// Runs the plan: up to cc files of each cluster in flight, each file fetched
// as p ranged GETs written in place with bs-sized reads and writes. Servers
// without byte-range support get a single stream. Files are written under
// dest_dir by URL basename.
TransferReport execute(const broker::SchedulePlan& plan, const std::string& dest_dir,
                       const ExecuteOptions& opt = {});

struct RemoteInfo {
  std::optional<std::uint64_t> size;  // Content-Length of a HEAD
  bool ranges = false;                // Accept-Ranges: bytes
  double rtt_ms = 0;                  // TCP connect time
};
// One HEAD request. Throws Errc::transfer.
RemoteInfo probe_remote(const std::string& url, const ExecuteOptions& opt = {});

// Summarizes a report as a log record. pw is set only when a trace is given,
// as dynamic energy over the transfer duration.
TransferLog emit_log(const TransferReport& report, const broker::TransferRequest& req,
                     const broker::NetProbe& probe, const DeviceInfo& device, NetIf net_if,
                     const PowerTrace* power = nullptr);

std::string sha256_hex(const void* data, std::size_t n);
std::string sha256_file(const std::string& path);  // throws Errc::io

}  // namespace fasthla::netio
