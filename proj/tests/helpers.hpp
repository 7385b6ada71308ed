#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "fasthla/types.hpp"

namespace testing_support {

inline fasthla::TransferLog make_log(double throughput = 10, double bw = 100,
                                     fasthla::ParamSetting theta = {}) {
  fasthla::TransferLog l;
  l.fs = 1e6;
  l.n_files = 10;
  l.t_rtt = 50;
  l.bs_tcp = 65536;
  l.bw = bw;
  l.params = theta;
  l.mu_cpu = 0.2;
  l.mu_mem = 0.1;
  l.mu_nic = throughput / bw;
  l.pw = 1.0;
  l.throughput = throughput;
  l.duration = 8.0;
  l.device = {"pixel-7", "android-14", 2, 8ull << 30, "802.11ax"};
  l.net_if = fasthla::NetIf::wifi;
  l.status = fasthla::TransferStatus::completed;
  l.timestamp = 1'700'000'000;
  return l;
}

// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() /
           ("fasthla-" + tag + "-" + std::to_string(rng() % 1'000'000'000));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng() & 0xff);
  return s;
}

}  // namespace testing_support
