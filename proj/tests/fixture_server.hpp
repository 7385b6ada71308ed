#pragma once

// Loopback HTTP server over an in-memory file map, for transfer tests.

#include <atomic>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "httplib.h"

namespace fixture {

struct Options {
  bool ranges = true;       // honour Range and advertise Accept-Ranges: bytes
  bool ignore_range = false;  // advertise ranges but answer every GET with 200
  int fail_first = 0;       // per path, the first N GETs die halfway through the body
};

class Server {
 public:
  explicit Server(std::map<std::string, std::string> files, Options opt = {})
      : files_(std::move(files)), opt_(opt) {
    svr_.new_task_queue = [] { return new httplib::ThreadPool(64); };
    svr_.Get("/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~Server() {
    svr_.stop();
    thread_.join();
  }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  int port() const { return port_; }
  std::string url(const std::string& name) const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/" + name;
  }

  std::atomic<int> heads{0};
  std::atomic<int> gets{0};
  std::atomic<int> ranged_gets{0};
  std::atomic<int> aborted{0};

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const auto it = files_.find(req.matches[1]);
    if (it == files_.end()) {
      res.status = 404;
      return;
    }
    const std::string& body = it->second;
    if (req.method == "HEAD") {
      ++heads;
    } else {
      ++gets;
      if (!req.ranges.empty()) ++ranged_gets;
    }
    if (!opt_.ranges) res.set_header("Accept-Ranges", "none");

    bool fail = false;
    if (req.method == "GET" && opt_.fail_first > 0) {
      std::lock_guard lock(mu_);
      fail = failures_[it->first]++ < opt_.fail_first;
    }
    if (fail) {
      ++aborted;
      res.set_content_provider(
          body.size(), "application/octet-stream",
          [&body](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
            const auto half = length / 2;
            if (half > 0) sink.write(body.data() + offset, half);
            return false;  // drop the connection mid-body
          });
      return;
    }
    if (!opt_.ranges || opt_.ignore_range) res.status = 200;
    res.set_content(body, "application/octet-stream");
  }

  std::map<std::string, std::string> files_;
  Options opt_;
  httplib::Server svr_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::map<std::string, int> failures_;
};

}  // namespace fixture
