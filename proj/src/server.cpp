#include "fasthla/server.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "fasthla/error.hpp"
#include "fasthla/logs.hpp"
#include "httplib.h"
#include "json.hpp"

namespace fasthla::service {

namespace fs = std::filesystem;
using nlohmann::json;

ServiceConfig ServiceConfig::from(const KeyValueConfig& cfg) {
  static const char* kKnown[] = {"host",   "port",   "data_dir",          "pipeline_interval",
                                 "debounce", "seed", "cluster_threshold", "objective",
                                 "epochs", "learning_rate"};
  for (const auto& [key, value] : cfg.values()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown),
                     [&](const char* k) { return key == k; }) == std::end(kKnown)) {
      throw Error(Errc::parse, "unknown config key '" + key + "'");
    }
  }
  ServiceConfig c;
  c.host = cfg.get("host", c.host);
  c.port = static_cast<int>(cfg.get_int("port", c.port));
  c.data_dir = cfg.get("data_dir", c.data_dir);
  c.pipeline_interval = cfg.get_double("pipeline_interval", c.pipeline_interval);
  c.debounce = cfg.get_double("debounce", c.debounce);
  c.pipeline.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 42));
  c.pipeline.cluster_threshold = cfg.get_double("cluster_threshold", c.pipeline.cluster_threshold);
  if (cfg.has("objective")) c.pipeline.optimize.objective = parse_objective(cfg.get("objective", ""));
  c.pipeline.train.epochs = static_cast<int>(cfg.get_int("epochs", c.pipeline.train.epochs));
  c.pipeline.train.learning_rate = cfg.get_double("learning_rate", c.pipeline.train.learning_rate);
  if (c.port < 0 || c.port > 65535) throw Error(Errc::parse, "port out of range");
  if (c.pipeline_interval < 0 || c.debounce < 0) {
    throw Error(Errc::parse, "intervals must be non-negative");
  }
  return c;
}

namespace {

std::string today_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[16];
  std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
  return buf;
}

std::string etag_of(std::uint32_t version) { return "\"" + std::to_string(version) + "\""; }

bool etag_matches(const std::string& header, std::uint32_t version) {
  // Accepts a list of tags, quoted or bare, and weak tags.
  const auto tag = std::to_string(version);
  std::size_t pos = 0;
  while (pos <= header.size()) {
    auto end = header.find(',', pos);
    if (end == std::string::npos) end = header.size();
    std::string t = header.substr(pos, end - pos);
    t.erase(0, t.find_first_not_of(" \t"));
    t.erase(t.find_last_not_of(" \t") + 1);
    if (t == "*") return true;
    if (t.rfind("W/", 0) == 0) t = t.substr(2);
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
    if (t == tag) return true;
    pos = end + 1;
  }
  return false;
}

json row_json(const TableRow& r) {
  return {{"theta", {{"cc", r.theta_opt.cc}, {"p", r.theta_opt.p}, {"bs", r.theta_opt.bs}}},
          {"th", r.th},
          {"e", r.e},
          {"logs", r.cluster.logs}};
}

}  // namespace

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)), http_(std::make_unique<httplib::Server>()) {
  load_state();
  setup_routes();
}

Service::~Service() { stop(); }

void Service::load_state() {
  std::error_code ec;
  fs::create_directories(fs::path(cfg_.data_dir) / "logs", ec);
  if (!fs::is_directory(fs::path(cfg_.data_dir) / "logs")) {
    throw Error(Errc::io, "cannot create " + cfg_.data_dir);
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fs::path(cfg_.data_dir) / "logs")) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto batch = read_jsonl_file(f.string());
    logs_.insert(logs_.end(), batch.logs.begin(), batch.logs.end());
  }
  const auto model_path = fs::path(cfg_.data_dir) / "model.bin";
  std::ifstream in(model_path, std::ios::binary);
  if (in) {
    std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)), {});
    try {
      auto pub = std::make_shared<Published>();
      pub->model = learn::deserialize(blob);
      pub->blob = std::move(blob);
      published_ = std::move(pub);
    } catch (const Error& e) {
      last_error_ = std::string("ignored stored model: ") + e.what();
    }
  }
}

void Service::setup_routes() {
  http_->set_payload_max_length(cfg_.max_body);

  http_->Post("/v1/logs", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto r = ingest(req.body);
      res.set_content(json{{"accepted", r.accepted}, {"rejected", r.rejected}}.dump(),
                      "application/json");
    } catch (const Error& e) {
      res.status = 500;
      res.set_content(json{{"error", errc_name(e.code())}, {"message", e.what()}}.dump(),
                      "application/json");
    }
  });

  http_->Get("/v1/model", [this](const httplib::Request& req, httplib::Response& res) {
    const auto pub = published();
    if (!pub) {
      res.status = 404;
      res.set_content(json{{"error", "no model published yet"}}.dump(), "application/json");
      return;
    }
    res.set_header("ETag", etag_of(pub->model.version));
    if (req.has_header("If-None-Match") &&
        etag_matches(req.get_header_value("If-None-Match"), pub->model.version)) {
      res.status = 304;
      return;
    }
    res.set_content(std::string(pub->blob.begin(), pub->blob.end()), "application/octet-stream");
  });

  http_->Post("/v1/perf-drop", [this](const httplib::Request&, httplib::Response& res) {
    const bool scheduled = request_run();
    res.status = 202;
    res.set_content(json{{"scheduled", scheduled}}.dump(), "application/json");
  });

  http_->Get("/v1/params", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("key")) {
      res.status = 400;
      res.set_content(json{{"error", "missing key"}}.dump(), "application/json");
      return;
    }
    std::string key;
    try {
      key = broker::key_to_string(broker::parse_key(req.get_param_value("key")));
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    const auto pub = published();
    if (pub) {
      if (auto it = pub->params.find(key); it != pub->params.end()) {
        res.set_content(row_json(it->second).dump(), "application/json");
        return;
      }
    }
    res.status = 404;
    res.set_content(json{{"error", "no entry for key"}}.dump(), "application/json");
  });

  http_->Get("/v1/status", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"model_version", model_version()},
                         {"logs", log_count()},
                         {"last_error", last_error()}}
                        .dump(),
                    "application/json");
  });
}

IngestResult Service::ingest(std::string_view jsonl) {
  auto batch = parse_jsonl(jsonl);
  IngestResult r{batch.logs.size(), batch.rejected};
  if (batch.logs.empty()) return r;
  std::lock_guard lock(state_mu_);
  append_jsonl_file((fs::path(cfg_.data_dir) / "logs" / (today_utc() + ".jsonl")).string(),
                    batch.logs);
  logs_.insert(logs_.end(), std::make_move_iterator(batch.logs.begin()),
               std::make_move_iterator(batch.logs.end()));
  return r;
}

bool Service::request_run() {
  {
    std::lock_guard lock(queue_mu_);
    const auto now = std::chrono::steady_clock::now();
    if (has_requested_ &&
        std::chrono::duration<double>(now - last_request_).count() < cfg_.debounce) {
      return false;
    }
    has_requested_ = true;
    last_request_ = now;
    queued_ = true;
  }
  queue_cv_.notify_all();
  return true;
}

bool Service::run_now() {
  std::lock_guard run_lock(run_mu_);
  std::vector<TransferLog> logs;
  std::shared_ptr<const Published> prior;
  {
    std::lock_guard lock(state_mu_);
    logs = logs_;
    prior = published_;
  }
  try {
    auto result = run_pipeline(logs, prior ? &prior->model : nullptr, cfg_.pipeline);
    auto pub = std::make_shared<Published>();
    pub->model = result.model;
    pub->blob = learn::serialize(result.model);
    for (const auto& row : result.table) {
      const auto key = broker::key_to_string(row.cluster.key);
      // Several clusters can share a bucket; keep the best-supported one.
      auto [it, inserted] = pub->params.emplace(key, row);
      if (!inserted && row.cluster.logs > it->second.cluster.logs) it->second = row;
    }
    const auto path = fs::path(cfg_.data_dir) / "model.bin";
    const auto tmp = fs::path(path.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(pub->blob.data()),
                static_cast<std::streamsize>(pub->blob.size()));
      if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
    std::lock_guard lock(state_mu_);
    published_ = std::move(pub);
    last_error_.clear();
    return true;
  } catch (const std::exception& e) {
    std::lock_guard lock(state_mu_);
    last_error_ = e.what();
    return false;
  }
}

void Service::worker_loop() {
  using namespace std::chrono;
  auto next_periodic = steady_clock::now() + duration_cast<steady_clock::duration>(
                                                  duration<double>(cfg_.pipeline_interval));
  std::unique_lock lock(queue_mu_);
  while (!stopping_) {
    bool periodic = false;
    if (cfg_.pipeline_interval > 0) {
      periodic = !queue_cv_.wait_until(lock, next_periodic, [&] { return queued_ || stopping_; });
    } else {
      queue_cv_.wait(lock, [&] { return queued_ || stopping_; });
    }
    if (stopping_) break;
    if (periodic) {
      next_periodic += duration_cast<steady_clock::duration>(duration<double>(cfg_.pipeline_interval));
    }
    queued_ = false;
    running_ = true;
    lock.unlock();
    run_now();
    lock.lock();
    running_ = false;
    queue_cv_.notify_all();
  }
}

void Service::wait_idle() {
  std::unique_lock lock(queue_mu_);
  queue_cv_.wait(lock, [&] { return (!queued_ && !running_) || stopping_ || !worker_.joinable(); });
}

int Service::start() {
  if (cfg_.port == 0) {
    bound_port_ = http_->bind_to_any_port(cfg_.host);
  } else {
    bound_port_ = http_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
  }
  if (bound_port_ <= 0) {
    throw Error(Errc::io, "cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  }
  worker_ = std::thread([this] { worker_loop(); });
  listener_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return bound_port_;
}

void Service::run() {
  start();
  listener_.join();
  stop();
}

void Service::stop() {
  {
    std::lock_guard lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (http_) http_->stop();
  if (listener_.joinable() && listener_.get_id() != std::this_thread::get_id()) listener_.join();
  if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const Published> Service::published() const {
  std::lock_guard lock(state_mu_);
  return published_;
}

std::uint32_t Service::model_version() const {
  const auto p = published();
  return p ? p->model.version : 0;
}

std::size_t Service::log_count() const {
  std::lock_guard lock(state_mu_);
  return logs_.size();
}

std::string Service::last_error() const {
  std::lock_guard lock(state_mu_);
  return last_error_;
}

}  // namespace fasthla::service
