#include "fasthla/netio.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <sys/resource.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/time.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "fasthla/energy.hpp"
#include "fasthla/error.hpp"

namespace fasthla::netio {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::vector<ByteRange> split_ranges(std::uint64_t size, int p) {
  if (p < 1) throw Error(Errc::invalid_argument, "parallelism must be >= 1");
  const std::uint64_t n = std::min<std::uint64_t>(static_cast<std::uint64_t>(p), size);
  std::vector<ByteRange> out;
  out.reserve(n);
  if (n == 0) return out;
  const std::uint64_t base = size / n, extra = size % n;
  std::uint64_t off = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t len = base + (i < extra ? 1 : 0);
    out.push_back({off, len});
    off += len;
  }
  return out;
}

Url parse_url(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (url.rfind(kScheme, 0) != 0) {
    throw Error(Errc::invalid_argument, "only http:// URLs are supported: " + url);
  }
  const auto rest = url.substr(kScheme.size());
  const auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  Url u;
  if (slash != std::string::npos) u.path = rest.substr(slash);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    u.port = authority.substr(colon + 1);
    authority.resize(colon);
  }
  if (authority.empty() || u.port.empty()) {
    throw Error(Errc::invalid_argument, "malformed URL: " + url);
  }
  u.host = authority;
  return u;
}

std::size_t TransferReport::completed_count() const {
  return static_cast<std::size_t>(
      std::count_if(files.begin(), files.end(), [](const auto& f) { return f.completed; }));
}

std::size_t TransferReport::failed_count() const { return files.size() - completed_count(); }

namespace {

std::string to_hex(const unsigned char* md, unsigned len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t n) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::io, "sha256 failed");
  }
  return to_hex(md, len);
}

std::string sha256_file(const std::string& path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw Error(Errc::io, "cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  ssize_t n;
  while ((n = ::read(fd, buf.data(), buf.size())) > 0) {
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(n));
  }
  ::close(fd);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  if (n < 0) throw Error(Errc::io, "read failed on " + path);
  return to_hex(md, len);
}

namespace {

// Thrown when a server answers a ranged GET with the whole file.
struct RangeRejected {};

struct Shared {
  ExecuteOptions opt;
  std::atomic<int> connections{0};
  std::atomic<int> max_connections{0};
  std::atomic<int> files_in_flight{0};
  std::atomic<int> max_files_in_flight{0};
  std::atomic<std::uint64_t> bytes{0};
  std::atomic<int> rcvbuf{0};
};

void bump_max(std::atomic<int>& peak, int v) {
  int cur = peak.load();
  while (v > cur && !peak.compare_exchange_weak(cur, v)) {
  }
}

class Counted {
 public:
  Counted(std::atomic<int>& n, std::atomic<int>& peak) : n_(n) { bump_max(peak, ++n_); }
  ~Counted() { --n_; }
  Counted(const Counted&) = delete;
  Counted& operator=(const Counted&) = delete;

 private:
  std::atomic<int>& n_;
};

class Connection {
 public:
  Connection(const Url& u, Shared& sh) : count_(sh.connections, sh.max_connections) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(u.host.c_str(), u.port.c_str(), &hints, &res) != 0 || !res) {
      throw Error(Errc::transfer, "cannot resolve " + u.host);
    }
    for (auto* ai = res; ai; ai = ai->ai_next) {
      fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd_ < 0) continue;
      timeval tv{sh.opt.timeout_ms / 1000, (sh.opt.timeout_ms % 1000) * 1000};
      ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw Error(Errc::transfer, "cannot connect to " + u.host + ":" + u.port);
    if (sh.rcvbuf.load() == 0) {
      int v = 0;
      socklen_t len = sizeof v;
      if (::getsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &v, &len) == 0) sh.rcvbuf.store(v);
    }
  }
  ~Connection() {
    if (fd_ >= 0) ::close(fd_);
  }
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  void send_all(const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
      const auto n = ::send(fd_, s.data() + off, s.size() - off, MSG_NOSIGNAL);
      if (n <= 0) throw Error(Errc::transfer, "send failed");
      off += static_cast<std::size_t>(n);
    }
  }

  // 0 on orderly close.
  std::size_t recv_some(char* buf, std::size_t cap) {
    const auto n = ::recv(fd_, buf, cap, 0);
    if (n < 0) throw Error(Errc::transfer, std::string("recv failed: ") + std::strerror(errno));
    return static_cast<std::size_t>(n);
  }

 private:
  Counted count_;
  int fd_ = -1;
};

struct ResponseHead {
  int status = 0;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body_prefix;                     // body bytes read with the head

  std::optional<std::uint64_t> content_length() const {
    auto it = headers.find("content-length");
    if (it == headers.end()) return std::nullopt;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw Error(Errc::transfer, "bad Content-Length");
    }
  }
};

std::string request_text(const char* method, const Url& u,
                         std::optional<std::pair<std::uint64_t, std::uint64_t>> range) {
  std::string r = std::string(method) + " " + u.path + " HTTP/1.1\r\nHost: " + u.host +
                  (u.port == "80" ? "" : ":" + u.port) + "\r\nConnection: close\r\n";
  if (range) {
    r += "Range: bytes=" + std::to_string(range->first) + "-" +
         std::to_string(range->second) + "\r\n";
  }
  return r + "\r\n";
}

ResponseHead read_head(Connection& c, std::vector<char>& buf) {
  std::string raw;
  std::size_t end;
  while ((end = raw.find("\r\n\r\n")) == std::string::npos) {
    if (raw.size() > 64 * 1024) throw Error(Errc::transfer, "response head too large");
    const auto n = c.recv_some(buf.data(), buf.size());
    if (n == 0) throw Error(Errc::transfer, "connection closed before response head");
    raw.append(buf.data(), n);
  }
  ResponseHead h;
  h.body_prefix = raw.substr(end + 4);
  raw.resize(end);
  std::size_t pos = raw.find("\r\n");
  const std::string status_line = raw.substr(0, pos);
  const auto sp = status_line.find(' ');
  if (status_line.rfind("HTTP/", 0) != 0 || sp == std::string::npos) {
    throw Error(Errc::transfer, "malformed status line");
  }
  h.status = std::atoi(status_line.c_str() + sp + 1);
  while (pos != std::string::npos) {
    const auto start = pos + 2;
    pos = raw.find("\r\n", start);
    const auto line = raw.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string name = line.substr(0, colon);
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    auto value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t") + 1);
    h.headers[name] = value;
  }
  if (auto it = h.headers.find("transfer-encoding");
      it != h.headers.end() && it->second != "identity") {
    throw Error(Errc::transfer, "unsupported transfer encoding: " + it->second);
  }
  return h;
}

struct Probe {
  std::optional<std::uint64_t> size;
  bool ranges = false;
};

Probe head(const Url& u, Shared& sh) {
  Connection c(u, sh);
  c.send_all(request_text("HEAD", u, std::nullopt));
  std::vector<char> buf(4096);
  const auto h = read_head(c, buf);
  if (h.status != 200) throw Error(Errc::transfer, "HEAD returned " + std::to_string(h.status));
  Probe p;
  p.size = h.content_length();
  auto it = h.headers.find("accept-ranges");
  p.ranges = it != h.headers.end() && it->second.find("bytes") != std::string::npos;
  return p;
}

class OutFile {
 public:
  explicit OutFile(const std::string& path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd_ < 0) throw Error(Errc::io, "cannot create " + path);
  }
  ~OutFile() {
    if (fd_ >= 0) ::close(fd_);
  }
  OutFile(const OutFile&) = delete;
  OutFile& operator=(const OutFile&) = delete;

  void resize(std::uint64_t n) {
    if (::ftruncate(fd_, static_cast<off_t>(n)) != 0) throw Error(Errc::io, "ftruncate failed");
  }
  void write_at(const char* p, std::size_t n, std::uint64_t off) {
    while (n > 0) {
      const auto w = ::pwrite(fd_, p, n, static_cast<off_t>(off));
      if (w <= 0) throw Error(Errc::io, "pwrite failed");
      p += w;
      n -= static_cast<std::size_t>(w);
      off += static_cast<std::uint64_t>(w);
    }
  }

 private:
  int fd_ = -1;
};

// Writes body bytes at `offset + done` in bs-sized pieces until `length`
// bytes are in (or EOF when length is unknown). Returns bytes received.
std::uint64_t pump(Connection& c, ResponseHead& h, OutFile& out, std::uint64_t offset,
                   std::optional<std::uint64_t> length, std::vector<char>& buf, Shared& sh,
                   std::uint64_t& done) {
  const std::uint64_t start = done;
  auto take = [&](const char* p, std::size_t n) {
    if (length) n = static_cast<std::size_t>(std::min<std::uint64_t>(n, *length - done));
    const std::size_t bs = buf.size();
    for (std::size_t k = 0; k < n; k += bs) {
      const auto m = std::min(bs, n - k);
      out.write_at(p + k, m, offset + done);
      done += m;
      sh.bytes += m;
    }
  };
  take(h.body_prefix.data(), h.body_prefix.size());
  while (!length || done < *length) {
    const auto n = c.recv_some(buf.data(), buf.size());
    if (n == 0) break;
    take(buf.data(), n);
  }
  return done - start;
}

// Fetches [offset, offset + length) into `out`. With `ranged`, every request
// carries a Range header and retries resume where the previous attempt stopped;
// without it the whole file is requested and a retry starts over.
void fetch(const Url& u, OutFile& out, std::uint64_t offset, std::uint64_t length,
           bool ranged, int bs, Shared& sh, int& retries, std::mutex& retries_mu) {
  std::vector<char> buf(static_cast<std::size_t>(bs));
  std::uint64_t done = 0;
  int attempt = 0;
  while (true) {
    try {
      Connection c(u, sh);
      if (ranged) {
        c.send_all(request_text("GET", u, std::pair{offset + done, offset + length - 1}));
      } else {
        done = 0;
        c.send_all(request_text("GET", u, std::nullopt));
      }
      auto h = read_head(c, buf);
      if (ranged && h.status == 200) throw RangeRejected{};
      if (h.status != (ranged ? 206 : 200)) {
        throw Error(Errc::transfer, "GET returned " + std::to_string(h.status));
      }
      pump(c, h, out, offset, length, buf, sh, done);
      if (done < length) throw Error(Errc::transfer, "connection closed mid-body");
      return;
    } catch (const Error&) {
      if (++attempt > sh.opt.max_retries) throw;
      std::lock_guard lock(retries_mu);
      ++retries;
    }
  }
}

void fetch_file(const FileEntry& entry, const ParamSetting& theta, FileResult& r, Shared& sh) {
  const auto t0 = Clock::now();
  Counted in_flight(sh.files_in_flight, sh.max_files_in_flight);
  std::mutex retries_mu;
  try {
    const Url u = parse_url(entry.url);
    OutFile out(r.path);
    Probe probe;
    try {
      probe = head(u, sh);
    } catch (const Error&) {
      // Some servers refuse HEAD; fall through to a plain GET.
    }
    if (!probe.size) {
      // Unknown length: one stream until the server closes.
      r.p_used = 1;
      r.range_fallback = theta.p > 1;
      int attempt = 0;
      std::vector<char> buf(static_cast<std::size_t>(theta.bs));
      while (true) {
        try {
          Connection c(u, sh);
          c.send_all(request_text("GET", u, std::nullopt));
          auto h = read_head(c, buf);
          if (h.status != 200) throw Error(Errc::transfer, "GET returned " + std::to_string(h.status));
          std::uint64_t done = 0;
          out.resize(0);
          pump(c, h, out, 0, h.content_length(), buf, sh, done);
          if (auto len = h.content_length(); len && done < *len) {
            throw Error(Errc::transfer, "connection closed mid-body");
          }
          r.bytes = done;
          break;
        } catch (const Error&) {
          if (++attempt > sh.opt.max_retries) throw;
          ++r.retries;
        }
      }
    } else {
      const std::uint64_t size = *probe.size;
      out.resize(size);
      int p = theta.p;
      if (p > 1 && !probe.ranges) {
        p = 1;
        r.range_fallback = true;
      }
      const auto ranges = split_ranges(size, p);
      r.p_used = std::max<int>(1, static_cast<int>(ranges.size()));
      bool rejected = false;
      if (!ranges.empty()) {
        std::vector<std::exception_ptr> errs(ranges.size());
        std::vector<char> rej(ranges.size(), 0);
        auto run = [&](std::size_t i) {
          try {
            fetch(u, out, ranges[i].offset, ranges[i].length, probe.ranges, theta.bs, sh,
                  r.retries, retries_mu);
          } catch (const RangeRejected&) {
            rej[i] = 1;
          } catch (...) {
            errs[i] = std::current_exception();
          }
        };
        std::vector<std::thread> workers;
        for (std::size_t i = 1; i < ranges.size(); ++i) workers.emplace_back(run, i);
        run(0);
        for (auto& w : workers) w.join();
        rejected = std::any_of(rej.begin(), rej.end(), [](char c) { return c != 0; });
        if (!rejected) {
          for (auto& e : errs)
            if (e) std::rethrow_exception(e);
        }
      }
      if (rejected) {
        // Advertised ranges but answered 200: refetch as one stream.
        r.range_fallback = true;
        r.p_used = 1;
        fetch(u, out, 0, size, false, theta.bs, sh, r.retries, retries_mu);
      }
      r.bytes = size;
    }
    r.sha256 = sha256_file(r.path);
    r.completed = true;
  } catch (const Error& e) {
    r.error = e.what();
  } catch (const RangeRejected&) {
    r.error = "server ignored the Range header";
  }
  r.duration = std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string file_name(const std::string& url) {
  auto path = url;
  if (auto q = path.find_first_of("?#"); q != std::string::npos) path.resize(q);
  auto slash = path.rfind('/');
  std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  if (name.empty() || name == "." || name == "..") name = "index.html";
  return name;
}

double cpu_seconds() {
  rusage ru{};
  ::getrusage(RUSAGE_SELF, &ru);
  return static_cast<double>(ru.ru_utime.tv_sec + ru.ru_stime.tv_sec) +
         static_cast<double>(ru.ru_utime.tv_usec + ru.ru_stime.tv_usec) * 1e-6;
}

}  // namespace

RemoteInfo probe_remote(const std::string& url, const ExecuteOptions& opt) {
  Shared sh;
  sh.opt = opt;
  const Url u = parse_url(url);
  const auto t0 = Clock::now();
  { Connection c(u, sh); }
  RemoteInfo info;
  info.rtt_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  const auto p = head(u, sh);
  info.size = p.size;
  info.ranges = p.ranges;
  return info;
}

TransferReport execute(const broker::SchedulePlan& plan, const std::string& dest_dir,
                       const ExecuteOptions& opt) {
  TransferReport report;
  for (const auto& e : plan.entries) {
    if (e.theta.cc < 1 || e.theta.p < 1 || e.theta.bs < 1) {
      throw Error(Errc::invalid_argument, "plan setting " + to_string(e.theta) + " is not positive");
    }
    report.connection_limit += e.theta.cc * e.theta.p;
    report.file_limit += e.theta.cc;
  }
  if (plan.file_count() == 0) return report;
  std::error_code ec;
  fs::create_directories(dest_dir, ec);
  if (!fs::is_directory(dest_dir)) throw Error(Errc::io, "cannot create " + dest_dir);

  // Results are laid out in plan order; names are made unique up front.
  std::set<std::string> used;
  std::uint64_t best_bytes = 0;
  for (const auto& e : plan.entries) {
    std::uint64_t bytes = 0;
    for (const auto& f : e.cluster.files) {
      FileResult r;
      r.url = f.url;
      r.theta = e.theta;
      r.p_used = e.theta.p;
      std::string name = file_name(f.url);
      for (int k = 1; used.count(name); ++k) name = std::to_string(k) + "_" + file_name(f.url);
      used.insert(name);
      r.path = (fs::path(dest_dir) / name).string();
      report.files.push_back(std::move(r));
      bytes += f.size;
    }
    if (bytes >= best_bytes) {
      best_bytes = bytes;
      report.theta = e.theta;
    }
  }

  Shared sh;
  sh.opt = opt;
  const double cpu0 = cpu_seconds();
  const auto t0 = Clock::now();

  std::mutex sample_mu;
  std::condition_variable sample_cv;
  bool finished = false;
  std::thread sampler([&] {
    std::uint64_t last = 0;
    auto next = t0 + std::chrono::seconds(1);
    std::unique_lock lock(sample_mu);
    while (!sample_cv.wait_until(lock, next, [&] { return finished; })) {
      const auto now_bytes = sh.bytes.load();
      report.samples.push_back(
          {std::chrono::duration<double>(next - t0).count(),
           static_cast<double>(now_bytes - last) * 8e-6});
      last = now_bytes;
      next += std::chrono::seconds(1);
    }
  });

  std::vector<std::thread> workers;
  std::size_t base = 0;
  std::vector<std::unique_ptr<std::atomic<std::size_t>>> cursors;
  for (const auto& e : plan.entries) {
    const auto n = e.cluster.files.size();
    cursors.push_back(std::make_unique<std::atomic<std::size_t>>(0));
    auto* cursor = cursors.back().get();
    const auto slots = std::min<std::size_t>(static_cast<std::size_t>(e.theta.cc), n);
    for (std::size_t w = 0; w < slots; ++w) {
      workers.emplace_back([&, cursor, base, n, &entry = e] {
        for (std::size_t i; (i = (*cursor)++) < n;) {
          fetch_file(entry.cluster.files[i], entry.theta, report.files[base + i], sh);
        }
      });
    }
    base += n;
  }
  for (auto& w : workers) w.join();

  report.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
  {
    std::lock_guard lock(sample_mu);
    finished = true;
  }
  sample_cv.notify_all();
  sampler.join();

  for (const auto& f : report.files) {
    if (f.completed) {
      report.total_bytes += f.bytes;
    } else {
      report.errors.push_back(f.url + ": " + f.error);
    }
    if (f.range_fallback) report.errors.push_back(f.url + ": range fallback to p=1");
  }
  if (report.wall_time > 0) {
    report.throughput = static_cast<double>(report.total_bytes) * 8e-6 / report.wall_time;
  }
  report.max_connections = sh.max_connections.load();
  report.max_files_in_flight = sh.max_files_in_flight.load();
  report.tcp_rcvbuf = sh.rcvbuf.load();
  report.cpu_time = cpu_seconds() - cpu0;
  return report;
}

TransferLog emit_log(const TransferReport& report, const broker::TransferRequest& req,
                     const broker::NetProbe& probe, const DeviceInfo& device, NetIf net_if,
                     const PowerTrace* power) {
  TransferLog l;
  l.fs = req.avg_file_size;
  l.n_files = static_cast<double>(req.num_files);
  l.t_rtt = probe.rtt_ms;
  l.bs_tcp = report.tcp_rcvbuf;
  l.bw = probe.bw_mbps;
  l.params = report.theta;
  l.throughput = report.throughput;
  l.duration = report.wall_time;
  const auto cores = std::max(1u, std::thread::hardware_concurrency());
  if (report.wall_time > 0) {
    l.mu_cpu = std::clamp(report.cpu_time / (report.wall_time * cores), 0.0, 1.0);
  }
  rusage ru{};
  ::getrusage(RUSAGE_SELF, &ru);
  const double mem = device.mem_bytes > 0
                         ? static_cast<double>(device.mem_bytes)
                         : static_cast<double>(::sysconf(_SC_PHYS_PAGES)) *
                               static_cast<double>(::sysconf(_SC_PAGE_SIZE));
  if (mem > 0) l.mu_mem = std::clamp(static_cast<double>(ru.ru_maxrss) * 1024.0 / mem, 0.0, 1.0);
  if (probe.bw_mbps > 0) l.mu_nic = std::clamp(report.throughput / probe.bw_mbps, 0.0, 1.0);
  if (power && report.wall_time > 0) l.pw = dynamic_energy(*power) / report.wall_time;
  l.device = device;
  l.net_if = net_if;
  const auto done = report.completed_count();
  if (report.files.empty() || done == report.files.size()) {
    l.status = TransferStatus::completed;
  } else if (done == 0) {
    l.status = TransferStatus::failed;
  } else {
    l.status = TransferStatus::aborted;
  }
  l.timestamp = static_cast<std::int64_t>(std::time(nullptr));
  return l;
}

}  // namespace fasthla::netio
