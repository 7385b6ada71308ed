#include "fasthla/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "fasthla/error.hpp"

namespace fasthla {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return s;
}

}  // namespace

std::vector<std::size_t> ward_agglomerate(
    std::span<const std::vector<double>> points,
    std::span<const std::size_t> weights, double threshold) {
  const std::size_t m = points.size();
  if (weights.size() != m) {
    throw Error(Errc::invalid_argument, "weights and points differ in length");
  }
  std::vector<std::size_t> label(m);
  std::iota(label.begin(), label.end(), 0);
  if (m < 2) return label;

  // Squared Ward distances, updated by Lance-Williams.
  std::vector<double> dist(m * m, 0.0);
  auto at = [&](std::size_t a, std::size_t b) -> double& { return dist[a * m + b]; };
  std::vector<double> size(m);
  for (std::size_t i = 0; i < m; ++i) size[i] = static_cast<double>(weights[i]);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double d2 = 2.0 * size[i] * size[j] / (size[i] + size[j]) *
                        squared_distance(points[i], points[j]);
      at(i, j) = at(j, i) = d2;
    }
  }

  std::vector<bool> active(m, true);
  std::vector<std::size_t> nn(m, m);
  std::vector<double> nnd(m, kInf);
  auto rescan = [&](std::size_t k) {
    nn[k] = m;
    nnd[k] = kInf;
    for (std::size_t l = k + 1; l < m; ++l) {
      if (active[l] && at(k, l) < nnd[k]) {
        nnd[k] = at(k, l);
        nn[k] = l;
      }
    }
  };
  for (std::size_t k = 0; k < m; ++k) rescan(k);

  const double limit = threshold * threshold;
  while (true) {
    std::size_t i = m;
    double best = kInf;
    for (std::size_t k = 0; k < m; ++k) {
      if (active[k] && nn[k] < m && nnd[k] < best) {
        best = nnd[k];
        i = k;
      }
    }
    if (i == m || best > limit) break;
    const std::size_t j = nn[i];

    const double ni = size[i], nj = size[j], dij = at(i, j);
    for (std::size_t k = 0; k < m; ++k) {
      if (!active[k] || k == i || k == j) continue;
      const double nk = size[k];
      const double d2 =
          ((ni + nk) * at(i, k) + (nj + nk) * at(j, k) - nk * dij) / (ni + nj + nk);
      at(i, k) = at(k, i) = std::max(d2, 0.0);
    }
    size[i] = ni + nj;
    active[j] = false;
    for (auto& l : label)
      if (l == j) l = i;

    for (std::size_t k = 0; k < m; ++k) {
      if (!active[k] || k == i) continue;
      if (nn[k] == i || nn[k] == j) {
        rescan(k);
      } else if (k < i && (at(k, i) < nnd[k] || (at(k, i) == nnd[k] && i < nn[k]))) {
        nnd[k] = at(k, i);
        nn[k] = i;
      }
    }
    rescan(i);
  }
  return label;
}

std::vector<LogCluster> cluster_logs(std::span<const TransferLog> logs,
                                     double threshold) {
  if (!(threshold > 0)) {
    throw Error(Errc::invalid_argument, "cluster threshold must be positive");
  }
  std::vector<LogCluster> out;
  if (logs.empty()) return out;

  // Categorical precedence: partitions keyed by (device model, interface),
  // in order of first appearance.
  std::map<std::tuple<std::string, NetIf>, std::size_t> partition_of;
  std::vector<std::vector<std::size_t>> partitions;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    auto key = std::make_tuple(logs[i].device.model, logs[i].net_if);
    auto [it, inserted] = partition_of.emplace(key, partitions.size());
    if (inserted) partitions.emplace_back();
    partitions[it->second].push_back(i);
  }

  for (const auto& members : partitions) {
    const std::size_t n = members.size();
    std::vector<std::array<double, 3>> raw(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto& l = logs[members[r]];
      raw[r] = {std::log10(l.fs), std::log10(l.t_rtt), std::log10(l.bw)};
    }
    std::array<double, 3> mean{}, sd{};
    for (const auto& f : raw)
      for (int d = 0; d < 3; ++d) mean[d] += f[d] / static_cast<double>(n);
    for (const auto& f : raw)
      for (int d = 0; d < 3; ++d)
        sd[d] += (f[d] - mean[d]) * (f[d] - mean[d]) / static_cast<double>(n);
    for (auto& s : sd) s = std::sqrt(s);

    std::vector<std::vector<double>> z(n, std::vector<double>(3, 0.0));
    for (std::size_t r = 0; r < n; ++r)
      for (int d = 0; d < 3; ++d)
        z[r][d] = sd[d] > 0 ? (raw[r][d] - mean[d]) / sd[d] : 0.0;

    // Identical feature vectors merge at height zero; collapse them first.
    std::map<std::vector<double>, std::size_t> unique_of;
    std::vector<std::vector<double>> points;
    std::vector<std::size_t> weights;
    std::vector<std::size_t> point_of(n);
    for (std::size_t r = 0; r < n; ++r) {
      auto [it, inserted] = unique_of.emplace(z[r], points.size());
      if (inserted) {
        points.push_back(z[r]);
        weights.push_back(0);
      }
      ++weights[it->second];
      point_of[r] = it->second;
    }

    const auto labels = ward_agglomerate(points, weights, threshold);
    std::map<std::size_t, std::size_t> cluster_of_label;
    const std::size_t first = out.size();
    for (std::size_t r = 0; r < n; ++r) {
      const auto lbl = labels[point_of[r]];
      auto [it, inserted] = cluster_of_label.emplace(lbl, out.size());
      if (inserted) out.emplace_back();
      auto& c = out[it->second];
      c.members.push_back(members[r]);
      for (int d = 0; d < 3; ++d) c.centroid[d] += z[r][d];
    }
    for (std::size_t c = first; c < out.size(); ++c)
      for (auto& v : out[c].centroid) v /= static_cast<double>(out[c].members.size());
  }

  std::sort(out.begin(), out.end(), [](const LogCluster& a, const LogCluster& b) {
    return a.members.front() < b.members.front();
  });
  return out;
}

std::vector<FileCluster> cluster_files(std::span<const FileEntry> dataset,
                                       double threshold_decades) {
  if (!(threshold_decades > 0)) {
    throw Error(Errc::invalid_argument, "file cluster threshold must be positive");
  }
  std::vector<FileCluster> out;
  if (dataset.empty()) return out;
  for (const auto& f : dataset) {
    if (f.size == 0) {
      throw Error(Errc::invalid_argument, "file size must be positive: " + f.url);
    }
  }

  // In one dimension the closest complete-linkage pair is always a pair of
  // neighbouring intervals in sorted order, so agglomerate along the sort.
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dataset[a].size < dataset[b].size;
  });
  struct Span {
    std::size_t begin, end;  // positions in `order`, half-open
    double lo, hi;           // log10 extent
  };
  std::vector<Span> spans;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double v = std::log10(static_cast<double>(dataset[order[k]].size));
    spans.push_back({k, k + 1, v, v});
  }
  while (spans.size() > 1) {
    std::size_t best = 0;
    double best_d = kInf;
    for (std::size_t k = 0; k + 1 < spans.size(); ++k) {
      const double d = spans[k + 1].hi - spans[k].lo;
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best_d > threshold_decades) break;
    spans[best].end = spans[best + 1].end;
    spans[best].hi = spans[best + 1].hi;
    spans.erase(spans.begin() + static_cast<std::ptrdiff_t>(best) + 1);
  }

  for (const auto& s : spans) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s.begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(s.end));
    std::sort(idx.begin(), idx.end());
    FileCluster c;
    double total = 0;
    for (auto i : idx) {
      c.files.push_back(dataset[i]);
      total += static_cast<double>(dataset[i].size);
    }
    c.mean_size = total / static_cast<double>(idx.size());
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const FileCluster& a, const FileCluster& b) {
    return a.mean_size > b.mean_size;
  });
  return out;
}

}  // namespace fasthla
