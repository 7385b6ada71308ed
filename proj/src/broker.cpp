#include "fasthla/broker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fasthla/error.hpp"
#include "fasthla/logs.hpp"
#include "json.hpp"

namespace fasthla::broker {

using nlohmann::json;

TransferRequest TransferRequest::from_dataset(std::vector<FileEntry> files,
                                              int user_limit) {
  TransferRequest req;
  req.num_files = files.size();
  double total = 0;
  for (const auto& f : files) total += static_cast<double>(f.size);
  req.avg_file_size = files.empty() ? 0.0 : total / static_cast<double>(files.size());
  req.dataset = std::move(files);
  req.user_limit = user_limit;
  return req;
}

void TransferRequest::validate() const {
  if (num_files != dataset.size()) {
    throw Error(Errc::invalid_argument, "num_files does not match the dataset");
  }
  if (user_limit < 1) throw Error(Errc::invalid_argument, "user_limit must be >= 1");
  if (dataset.empty()) return;
  double total = 0;
  for (const auto& f : dataset) total += static_cast<double>(f.size);
  const double mean = total / static_cast<double>(dataset.size());
  if (std::abs(avg_file_size - mean) > 0.01 * mean) {
    throw Error(Errc::invalid_argument, "avg_file_size disagrees with the dataset");
  }
}

int bw_bucket(double bw_mbps) {
  if (!(bw_mbps > 0)) return std::numeric_limits<int>::min();
  return static_cast<int>(std::lround(std::log2(bw_mbps)));
}

int rtt_bucket(double rtt_ms) {
  if (rtt_ms < 50) return 0;
  if (rtt_ms < 150) return 1;
  if (rtt_ms <= 400) return 2;
  return 3;
}

int size_class(double mean_bytes) {
  if (!(mean_bytes > 0)) return std::numeric_limits<int>::min();
  return static_cast<int>(std::floor(std::log10(mean_bytes)));
}

NetConditionKey make_key(const TransferRequest& req, const NetProbe& probe,
                         const DeviceInfo& device, NetIf net_if) {
  return {net_if, bw_bucket(probe.bw_mbps), rtt_bucket(probe.rtt_ms), device.model,
          size_class(req.avg_file_size)};
}

std::string key_to_string(const NetConditionKey& key) {
  return std::string(to_string(key.net_if)) + "|bw=" + std::to_string(key.bw_bucket) +
         "|rtt=" + std::to_string(key.rtt_bucket) + "|size=" + std::to_string(key.size_class) +
         "|model=" + key.model;
}

NetConditionKey parse_key(std::string_view text) {
  auto fail = [&] { return Error(Errc::parse, "bad condition key '" + std::string(text) + "'"); };
  auto next = [&](std::string_view& rest, bool last) {
    const auto bar = last ? std::string_view::npos : rest.find('|');
    if (!last && bar == std::string_view::npos) throw fail();
    auto field = rest.substr(0, bar);
    rest = last ? std::string_view{} : rest.substr(bar + 1);
    return field;
  };
  auto number = [&](std::string_view field, std::string_view name) {
    if (field.substr(0, name.size()) != name) throw fail();
    try {
      std::size_t used = 0;
      const std::string digits(field.substr(name.size()));
      const int v = std::stoi(digits, &used);
      if (used != digits.size()) throw fail();
      return v;
    } catch (const std::logic_error&) {
      throw fail();
    }
  };
  std::string_view rest = text;
  NetConditionKey key;
  const auto iface = next(rest, false);
  if (iface == "wifi") {
    key.net_if = NetIf::wifi;
  } else if (iface == "cellular") {
    key.net_if = NetIf::cellular;
  } else {
    throw fail();
  }
  key.bw_bucket = number(next(rest, false), "bw=");
  key.rtt_bucket = number(next(rest, false), "rtt=");
  key.size_class = number(next(rest, false), "size=");
  const auto model = next(rest, true);  // may itself contain '|'
  if (model.substr(0, 6) != "model=") throw fail();
  key.model = std::string(model.substr(6));
  return key;
}

// ---------------------------------------------------------------------------
// ParamCache

std::optional<CacheEntry> ParamCache::lookup(const NetConditionKey& key) {
  std::lock_guard lock(mu_);
  auto it = slots_.find(key);
  if (it == slots_.end()) return std::nullopt;
  order_.splice(order_.end(), order_, it->second.pos);
  return it->second.entry;
}

std::optional<CacheEntry> ParamCache::peek(const NetConditionKey& key) const {
  std::lock_guard lock(mu_);
  auto it = slots_.find(key);
  if (it == slots_.end()) return std::nullopt;
  return it->second.entry;
}

bool ParamCache::record(const NetConditionKey& key, const CacheEntry& entry) {
  std::lock_guard lock(mu_);
  if (auto it = slots_.find(key); it != slots_.end()) {
    if (entry.efficiency < it->second.entry.efficiency) return false;
    it->second.entry = entry;
    order_.splice(order_.end(), order_, it->second.pos);
    return true;
  }
  if (capacity_ == 0) return false;
  if (slots_.size() >= capacity_) {
    slots_.erase(order_.front());
    order_.pop_front();
  }
  order_.push_back(key);
  slots_.emplace(key, Slot{entry, std::prev(order_.end())});
  return true;
}

std::size_t ParamCache::size() const {
  std::lock_guard lock(mu_);
  return slots_.size();
}

void ParamCache::save(const std::string& path) const {
  std::lock_guard lock(mu_);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write cache " + tmp);
    for (const auto& key : order_) {
      const auto& e = slots_.at(key).entry;
      json j = {{"net_if", to_string(key.net_if)},
                {"bw_bucket", key.bw_bucket},
                {"rtt_bucket", key.rtt_bucket},
                {"model", key.model},
                {"size_class", key.size_class},
                {"theta", {{"cc", e.theta.cc}, {"p", e.theta.p}, {"bs", e.theta.bs}}},
                {"efficiency", e.efficiency},
                {"throughput", e.throughput},
                {"ts", e.ts}};
      out << j.dump() << '\n';
    }
    if (!out) throw Error(Errc::io, "write failed on " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error(Errc::io, "cannot replace cache " + path);
  }
}

void ParamCache::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) return;  // first run
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      NetConditionKey key;
      key.net_if = j.at("net_if").get<std::string>() == "cellular" ? NetIf::cellular
                                                                   : NetIf::wifi;
      key.bw_bucket = j.at("bw_bucket").get<int>();
      key.rtt_bucket = j.at("rtt_bucket").get<int>();
      key.model = j.at("model").get<std::string>();
      key.size_class = j.at("size_class").get<int>();
      CacheEntry e;
      const auto& t = j.at("theta");
      e.theta = {t.at("cc").get<int>(), t.at("p").get<int>(), t.at("bs").get<int>()};
      e.efficiency = j.at("efficiency").get<double>();
      e.throughput = j.value("throughput", 0.0);
      e.ts = j.at("ts").get<std::int64_t>();
      if (!e.theta.is_feasible()) continue;
      record(key, e);
    } catch (const json::exception&) {
      // A damaged line loses one entry, not the cache.
    }
  }
}

std::string_view to_string(ParamSource s) {
  switch (s) {
    case ParamSource::cache: return "cache";
    case ParamSource::lm: return "lm";
    case ParamSource::default_setting: return "default";
  }
  return "default";
}

Resolution resolve_params(const TransferRequest& req, const NetProbe& probe,
                          const DeviceInfo& device, NetIf net_if, ParamCache& cache,
                          const learn::LearnedModel* lm) {
  const auto key = make_key(req, probe, device, net_if);
  if (auto hit = cache.lookup(key); hit && hit->theta.is_feasible()) {
    return {hit->theta, ParamSource::cache};
  }
  if (lm && lm->version > 0 && req.avg_file_size > 0 && req.num_files > 0 &&
      probe.rtt_ms > 0 && probe.bw_mbps > 0) {
    const auto f = learn::make_features(req.avg_file_size,
                                        static_cast<double>(req.num_files), probe.rtt_ms,
                                        probe.bw_mbps, net_if, device.cpu_class);
    return {learn::predict(*lm, f), ParamSource::lm};
  }
  return {kDefaultParams, ParamSource::default_setting};
}

bool detect_perf_drop(double predicted_th, std::span<const ThroughputSample> window) {
  if (window.size() < kDropSeconds) {
    throw Error(Errc::insufficient_window,
                "need at least " + std::to_string(kDropSeconds) + " s of samples");
  }
  const double limit = kDropRatio * predicted_th;
  std::size_t run = 0;
  for (const auto& s : window) {
    run = s.mbps < limit ? run + 1 : 0;
    if (run >= kDropSeconds) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Scheduling

int SchedulePlan::total_cc() const {
  int total = 0;
  for (const auto& e : entries) total += e.theta.cc;
  return total;
}

std::size_t SchedulePlan::file_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.cluster.files.size();
  return n;
}

void scale_to_limit(std::vector<PlanEntry>& entries, int user_limit) {
  long long sum = 0;
  for (const auto& e : entries) sum += e.theta.cc;
  if (sum <= user_limit) return;
  if (static_cast<long long>(entries.size()) > user_limit) {
    throw Error(Errc::invalid_argument,
                "user_limit " + std::to_string(user_limit) + " is below the " +
                    std::to_string(entries.size()) + " clusters to schedule");
  }
  // One common factor f keeps the mapping cc -> max(1, floor(cc * f))
  // monotone. Start from limit / sum; if the floor at 1 overshoots, step f
  // down through the breakpoints k / cc_i until the total fits.
  struct Ratio {
    long long num, den;
  };
  auto total = [&](Ratio f) {
    long long t = 0;
    for (const auto& e : entries) t += std::max<long long>(1, e.theta.cc * f.num / f.den);
    return t;
  };
  auto less = [](Ratio a, Ratio b) { return a.num * b.den < b.num * a.den; };
  Ratio f{user_limit, sum};
  if (total(f) > user_limit) {
    Ratio best{0, 1};
    for (const auto& e : entries) {
      for (long long k = 1; k <= e.theta.cc; ++k) {
        const Ratio c{k, e.theta.cc};
        if (less(f, c) || !less(best, c)) continue;
        if (total(c) <= user_limit) best = c;
      }
    }
    f = best;
  }
  for (auto& e : entries) {
    e.theta.cc = static_cast<int>(std::max<long long>(1, e.theta.cc * f.num / f.den));
    e.scaled = true;
  }
}

SchedulePlan schedule_mixed(const TransferRequest& req, const ClusterResolver& resolve,
                            double threshold_decades) {
  if (req.dataset.empty()) throw Error(Errc::empty_plan, "dataset is empty");
  SchedulePlan plan;
  for (auto& c : cluster_files(req.dataset, threshold_decades)) {
    TransferRequest sub;
    sub.dataset = c.files;
    sub.num_files = c.files.size();
    sub.avg_file_size = c.mean_size;
    sub.user_limit = req.user_limit;
    const auto theta = resolve(sub);
    plan.entries.push_back({std::move(c), theta, false});
  }
  scale_to_limit(plan.entries, req.user_limit);
  return plan;
}

// ---------------------------------------------------------------------------
// LogBuffer

void LogBuffer::push(TransferLog log) {
  std::lock_guard lock(mu_);
  if (capacity_ == 0) return;
  if (logs_.size() >= capacity_) logs_.pop_front();
  logs_.push_back(std::move(log));
}

std::size_t LogBuffer::size() const {
  std::lock_guard lock(mu_);
  return logs_.size();
}

std::vector<TransferLog> LogBuffer::snapshot() const {
  std::lock_guard lock(mu_);
  return {logs_.begin(), logs_.end()};
}

std::size_t LogBuffer::flush(const LogTransport& transport) {
  std::size_t sent = 0;
  while (true) {
    std::vector<TransferLog> batch;
    {
      std::lock_guard lock(mu_);
      const auto n = std::min(kLogBatchSize, logs_.size());
      batch.assign(logs_.begin(), logs_.begin() + static_cast<std::ptrdiff_t>(n));
    }
    if (batch.empty()) break;
    if (!transport(to_jsonl(batch))) break;
    {
      // Logs pushed meanwhile may have evicted some of the batch from the
      // front; drop only what is still there.
      std::lock_guard lock(mu_);
      std::size_t drop = 0;
      while (drop < batch.size() && drop < logs_.size() && logs_[drop] == batch[drop]) ++drop;
      logs_.erase(logs_.begin(), logs_.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    sent += batch.size();
  }
  return sent;
}

}  // namespace fasthla::broker
