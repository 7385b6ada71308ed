#include "fasthla/logs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "fasthla/error.hpp"
#include "json.hpp"

namespace fasthla {

using nlohmann::json;

std::string_view to_string(NetIf v) {
  return v == NetIf::wifi ? "wifi" : "cellular";
}

std::string_view to_string(TransferStatus v) {
  switch (v) {
    case TransferStatus::completed: return "completed";
    case TransferStatus::aborted: return "aborted";
    case TransferStatus::failed: return "failed";
  }
  return "failed";
}

namespace {

bool finite_all(const TransferLog& l) {
  for (double v : {l.fs, l.n_files, l.t_rtt, l.bs_tcp, l.bw, l.mu_cpu, l.mu_mem,
                   l.mu_nic, l.throughput, l.duration}) {
    if (!std::isfinite(v)) return false;
  }
  return !l.pw || std::isfinite(*l.pw);
}

bool passes_record_rules(const TransferLog& l) {
  if (l.status != TransferStatus::completed) return false;
  if (!finite_all(l)) return false;
  if (!(l.fs > 0 && l.n_files > 0 && l.duration > 0 && l.bw > 0 && l.t_rtt > 0))
    return false;
  if (l.throughput < 0 || l.throughput > l.bw) return false;
  if (l.pw && *l.pw < 0) return false;
  if (!l.params.is_feasible()) return false;
  return true;
}

using GroupKey = std::tuple<std::string, NetIf, int, int, int>;

GroupKey group_of(const TransferLog& l) {
  return {l.device.model, l.net_if, l.params.cc, l.params.p, l.params.bs};
}

}  // namespace

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(Errc::invalid_argument, "quantile of empty set");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<TransferLog> preprocess_logs(std::span<const TransferLog> raw) {
  std::vector<bool> keep(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) keep[i] = passes_record_rules(raw[i]);

  for (bool changed = true; changed;) {
    changed = false;
    std::map<GroupKey, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < raw.size(); ++i)
      if (keep[i]) groups[group_of(raw[i])].push_back(i);

    for (const auto& [key, idx] : groups) {
      if (idx.size() < kIqrMinGroup) continue;
      std::vector<double> th;
      th.reserve(idx.size());
      for (auto i : idx) th.push_back(raw[i].throughput);
      const double q1 = quantile(th, 0.25);
      const double q3 = quantile(th, 0.75);
      const double iqr = q3 - q1;
      const double lo = q1 - kIqrFence * iqr;
      const double hi = q3 + kIqrFence * iqr;
      for (auto i : idx) {
        if (raw[i].throughput < lo || raw[i].throughput > hi) {
          keep[i] = false;
          changed = true;
        }
      }
    }
  }

  std::vector<TransferLog> out;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (keep[i]) out.push_back(raw[i]);
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

json to_json(const TransferLog& l) {
  json j = {
      {"fs", l.fs},
      {"n_files", l.n_files},
      {"t_rtt", l.t_rtt},
      {"bs_tcp", l.bs_tcp},
      {"bw", l.bw},
      {"params", {{"cc", l.params.cc}, {"p", l.params.p}, {"bs", l.params.bs}}},
      {"mu_cpu", l.mu_cpu},
      {"mu_mem", l.mu_mem},
      {"mu_nic", l.mu_nic},
      {"throughput", l.throughput},
      {"duration", l.duration},
      {"device",
       {{"model", l.device.model},
        {"os", l.device.os},
        {"cpu_class", l.device.cpu_class},
        {"mem_bytes", l.device.mem_bytes},
        {"wifi_std", l.device.wifi_std}}},
      {"net_if", to_string(l.net_if)},
      {"status", to_string(l.status)},
      {"timestamp", l.timestamp},
  };
  if (l.pw) j["pw"] = *l.pw;
  return j;
}

NetIf parse_net_if(const std::string& s) {
  if (s == "wifi") return NetIf::wifi;
  if (s == "cellular") return NetIf::cellular;
  throw Error(Errc::parse, "unknown net_if '" + s + "'");
}

TransferStatus parse_status(const std::string& s) {
  if (s == "completed") return TransferStatus::completed;
  if (s == "aborted") return TransferStatus::aborted;
  if (s == "failed") return TransferStatus::failed;
  throw Error(Errc::parse, "unknown status '" + s + "'");
}

}  // namespace

std::string to_jsonl(const TransferLog& log) { return to_json(log).dump(); }

std::string to_jsonl(std::span<const TransferLog> logs) {
  std::string out;
  for (const auto& l : logs) {
    out += to_jsonl(l);
    out += '\n';
  }
  return out;
}

TransferLog parse_log_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    if (!j.is_object()) throw Error(Errc::parse, "log line is not an object");
    TransferLog l;
    l.fs = j.at("fs").get<double>();
    l.n_files = j.at("n_files").get<double>();
    l.t_rtt = j.at("t_rtt").get<double>();
    l.bs_tcp = j.at("bs_tcp").get<double>();
    l.bw = j.at("bw").get<double>();
    const auto& p = j.at("params");
    l.params = {p.at("cc").get<int>(), p.at("p").get<int>(), p.at("bs").get<int>()};
    l.mu_cpu = j.at("mu_cpu").get<double>();
    l.mu_mem = j.at("mu_mem").get<double>();
    l.mu_nic = j.at("mu_nic").get<double>();
    if (auto it = j.find("pw"); it != j.end() && !it->is_null())
      l.pw = it->get<double>();
    l.throughput = j.at("throughput").get<double>();
    l.duration = j.at("duration").get<double>();
    const auto& d = j.at("device");
    l.device.model = d.at("model").get<std::string>();
    l.device.os = d.value("os", "");
    l.device.cpu_class = d.value("cpu_class", 0);
    l.device.mem_bytes = d.value("mem_bytes", std::uint64_t{0});
    l.device.wifi_std = d.value("wifi_std", "");
    if (l.device.model.empty()) throw Error(Errc::parse, "device.model is empty");
    l.net_if = parse_net_if(j.at("net_if").get<std::string>());
    l.status = parse_status(j.at("status").get<std::string>());
    l.timestamp = j.at("timestamp").get<std::int64_t>();
    return l;
  } catch (const json::exception& e) {
    throw Error(Errc::parse, e.what());
  }
}

JsonlBatch parse_jsonl(std::string_view text) {
  JsonlBatch batch;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      batch.logs.push_back(parse_log_line(line));
    } catch (const Error&) {
      ++batch.rejected;
    }
  }
  return batch;
}

JsonlBatch read_jsonl_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

void append_jsonl_file(const std::string& path, std::span<const TransferLog> logs) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::io, "cannot open " + path + " for append");
  out << to_jsonl(logs);
  if (!out) throw Error(Errc::io, "write failed on " + path);
}

}  // namespace fasthla
