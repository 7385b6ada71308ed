#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fasthla/config.hpp"
#include "fasthla/learn.hpp"
#include "fasthla/pipeline.hpp"

namespace httplib {
class Server;
}

namespace fasthla::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;                    // 0 picks a free port
  std::string data_dir = "hla-data";  // logs/<date>.jsonl, model.bin
  double pipeline_interval = 3600;    // s; 0 disables periodic runs
  double debounce = 60;               // s between drop-triggered runs
  std::size_t max_body = 10 * 1024 * 1024;
  PipelineOptions pipeline;

  // Keys: host, port, data_dir, pipeline_interval, debounce, seed,
  // cluster_threshold, objective, epochs, learning_rate.
  static ServiceConfig from(const KeyValueConfig& cfg);
};

struct IngestResult {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

// What the service currently publishes. Swapped as a whole after each run.
struct Published {
  learn::LearnedModel model;
  std::vector<std::uint8_t> blob;
  std::map<std::string, TableRow> params;  // by broker::key_to_string
};

class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Serves on the calling thread until stop().
  void run();
  void stop();

  // The HTTP handlers call these; tests may too.
  IngestResult ingest(std::string_view jsonl);
  // Queues a pipeline run unless one was queued within the debounce window.
  bool request_run();
  // Runs the pipeline now on the calling thread. Returns false when the run
  // produced no model (no logs, nothing trainable).
  bool run_now();
  // Blocks until no run is queued or in progress.
  void wait_idle();

  std::shared_ptr<const Published> published() const;
  std::uint32_t model_version() const;
  std::size_t log_count() const;
  std::string last_error() const;

 private:
  void setup_routes();
  void worker_loop();
  void load_state();

  ServiceConfig cfg_;
  std::unique_ptr<httplib::Server> http_;
  int bound_port_ = 0;
  std::thread listener_;
  std::thread worker_;

  mutable std::mutex state_mu_;  // logs_, published_, last_error_
  std::vector<TransferLog> logs_;
  std::shared_ptr<const Published> published_;
  std::string last_error_;

  std::mutex run_mu_;  // serializes pipeline runs

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  bool queued_ = false;
  bool running_ = false;
  bool stopping_ = false;
  bool has_requested_ = false;
  std::chrono::steady_clock::time_point last_request_{};
};

}  // namespace fasthla::service
