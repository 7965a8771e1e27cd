#include "transmuse/clustering.hpp"

#include "transmuse/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace transmuse {

// ---------------------------------------------------------------------------
// WK-means

std::vector<int> wkmeans_initial_centers(std::span<const double> means, int num_clusters) {
  const int n = static_cast<int>(means.size());
  if (num_clusters < 1 || num_clusters > n)
    throw InvalidArgument("wkmeans: need 1 <= N <= number of series");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return means[a] < means[b]; });

  const int seg = n / num_clusters;
  std::vector<int> centers;
  for (int j = 0; j < num_clusters; ++j) {
    const int begin = j * seg;
    const int end = j + 1 == num_clusters ? n : begin + seg;
    centers.push_back(order[begin + (end - begin - 1) / 2]);
  }
  return centers;
}

int medoid(const Matrix& distances, std::span<const int> members) {
  if (members.empty()) throw InvalidArgument("medoid of an empty cluster");
  int best = members[0];
  double best_sum = std::numeric_limits<double>::infinity();
  for (int candidate : members) {
    double sum = 0.0;
    for (int other : members) sum += distances(candidate, other);
    if (sum < best_sum) {
      best_sum = sum;
      best = candidate;
    }
  }
  return best;
}

std::size_t wd_medoid(const std::vector<std::vector<double>>& members) {
  if (members.empty()) throw InvalidArgument("medoid of an empty cluster");
  const Matrix d = pairwise_distances(members, DistanceKind::wasserstein());
  std::vector<int> idx(members.size());
  std::iota(idx.begin(), idx.end(), 0);
  return static_cast<std::size_t>(medoid(d, idx));
}

WkMeansResult wkmeans_run(const Matrix& distances, std::span<const double> means, int num_clusters,
                          int max_iterations) {
  const int n = static_cast<int>(means.size());
  if (n == 0) throw InvalidArgument("wkmeans: empty series list");
  if (distances.rows() != n || distances.cols() != n)
    throw InvalidArgument("wkmeans: distance matrix does not match series count");
  if (num_clusters > n)
    throw InvalidArgument("wkmeans: N=" + std::to_string(num_clusters) + " exceeds " + std::to_string(n) + " series");
  if (num_clusters < 1) throw InvalidArgument("wkmeans: N must be positive");
  if (max_iterations < 1) throw InvalidArgument("wkmeans: I must be at least 1");

  std::vector<int> centers = wkmeans_initial_centers(means, num_clusters);

  // Initial labels are the segment memberships.
  std::vector<int> labels(n);
  {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return means[a] < means[b]; });
    const int seg = n / num_clusters;
    for (int pos = 0; pos < n; ++pos) labels[order[pos]] = std::min(pos / seg, num_clusters - 1);
  }

  WkMeansResult result;
  for (int iter = 1; iter <= max_iterations; ++iter) {
    std::vector<int> next(n);
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int flag = 0;
      for (int j = 0; j < num_clusters; ++j) {
        const double d = distances(i, centers[j]);
        if (d < best) {
          best = d;
          flag = j;
        }
      }
      next[i] = flag;
    }

    std::vector<std::vector<int>> members(num_clusters);
    for (int i = 0; i < n; ++i) members[next[i]].push_back(i);
    std::vector<int> updated = centers;
    for (int j = 0; j < num_clusters; ++j)
      if (!members[j].empty()) updated[j] = medoid(distances, members[j]);  // empty clusters keep their center

    const bool stable = next == labels && updated == centers;
    labels = std::move(next);
    centers = std::move(updated);
    result.iterations = iter;
    if (stable) {
      result.converged = true;
      break;
    }
  }

  result.partition = Partition(labels);
  // centers listed in canonical cluster order
  std::vector<int> seen(num_clusters, 0);
  for (int l : labels)
    if (!seen[l]) {
      seen[l] = 1;
      result.centers.push_back(centers[l]);
    }
  return result;
}

WkMeansResult wkmeans_run(const std::vector<std::vector<double>>& series, int num_clusters, int max_iterations,
                          const DistanceKind& kind) {
  if (series.empty()) throw InvalidArgument("wkmeans: empty series list");
  std::vector<double> means;
  for (const auto& s : series) {
    if (s.empty()) throw InvalidArgument("wkmeans: empty series");
    means.push_back(std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size()));
  }
  if (num_clusters > static_cast<int>(series.size()))
    throw InvalidArgument("wkmeans: N=" + std::to_string(num_clusters) + " exceeds " +
                          std::to_string(series.size()) + " series");
  return wkmeans_run(pairwise_distances(series, kind), means, num_clusters, max_iterations);
}

Partition wkmeans(const std::vector<std::vector<double>>& series, int num_clusters, int max_iterations) {
  if (num_clusters < 2) throw InvalidArgument("wkmeans: N must be at least 2");
  return wkmeans_run(series, num_clusters, max_iterations).partition;
}

// ---------------------------------------------------------------------------
// Node features and K-means

NodeFeatures node_features(const NodeDataset& dataset) {
  if (dataset.length == 0) throw InvalidArgument("node_features: empty dataset");
  NodeFeatures f;
  f.node_id = dataset.node_id;
  f.values.reserve(4 * dataset.series.size());
  for (const auto& s : dataset.series) {
    const double n = static_cast<double>(s.values.size());
    const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : s.values) var += (v - mean) * (v - mean);
    auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
    f.values.insert(f.values.end(), {mean, std::sqrt(var / n), *hi, *lo});
  }
  return f;
}

std::vector<std::vector<double>> standardize(const std::vector<std::vector<double>>& items) {
  if (items.empty()) return {};
  const std::size_t dim = items[0].size();
  for (const auto& it : items)
    if (it.size() != dim) throw InvalidArgument("standardize: ragged feature vectors");
  const double n = static_cast<double>(items.size());
  std::vector<std::vector<double>> out = items;
  for (std::size_t d = 0; d < dim; ++d) {
    double mean = 0.0;
    for (const auto& it : items) mean += it[d];
    mean /= n;
    double var = 0.0;
    for (const auto& it : items) var += (it[d] - mean) * (it[d] - mean);
    const double sd = std::sqrt(var / n);
    for (auto& it : out) it[d] = sd > 0.0 ? (it[d] - mean) / sd : 0.0;
  }
  return out;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

struct LloydRun {
  std::vector<int> labels;
  double inertia = 0.0;
  std::vector<double> trace;
};

LloydRun lloyd(const std::vector<std::vector<double>>& pts, std::vector<std::vector<double>> centroids,
               int max_iterations) {
  const int n = static_cast<int>(pts.size());
  const int k = static_cast<int>(centroids.size());
  LloydRun run;
  std::vector<int> prev;
  std::vector<double> dist(n);
  for (int it = 0; it < max_iterations; ++it) {
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = sq_dist(pts[i], centroids[c]);
        if (d < best) {
          best = d;
          labels[i] = c;
        }
      }
      dist[i] = best;
    }

    // Repair empty clusters with the point farthest from its centroid.
    std::vector<int> sizes(k, 0);
    for (int l : labels) ++sizes[l];
    for (int c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      int far = -1;
      for (int i = 0; i < n; ++i)
        if (sizes[labels[i]] > 1 && (far < 0 || dist[i] > dist[far])) far = i;
      if (far < 0) break;
      --sizes[labels[far]];
      labels[far] = c;
      sizes[c] = 1;
      centroids[c] = pts[far];
      dist[far] = 0.0;
    }

    run.inertia = std::accumulate(dist.begin(), dist.end(), 0.0);
    run.trace.push_back(run.inertia);
    const bool stable = labels == prev;
    prev = labels;
    run.labels = labels;
    if (stable) break;

    for (int c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      std::fill(centroids[c].begin(), centroids[c].end(), 0.0);
    }
    for (int i = 0; i < n; ++i)
      for (std::size_t d = 0; d < pts[i].size(); ++d) centroids[labels[i]][d] += pts[i][d];
    for (int c = 0; c < k; ++c)
      if (sizes[c] > 0)
        for (double& v : centroids[c]) v /= sizes[c];
  }
  return run;
}

}  // namespace

KMeansResult kmeans_points(const std::vector<std::vector<double>>& points, int k, int restarts, std::uint64_t seed,
                           int max_iterations) {
  const int n = static_cast<int>(points.size());
  if (n == 0) throw InvalidArgument("kmeans: no points");
  if (k < 1 || k > n)
    throw InvalidArgument("kmeans: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  if (restarts < 1) throw InvalidArgument("kmeans: restarts must be positive");
  for (const auto& p : points)
    if (p.size() != points[0].size()) throw InvalidArgument("kmeans: ragged feature vectors");

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  std::vector<int> best_labels;
  for (int r = 0; r < restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    std::vector<int> chosen{static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng))};
    std::vector<double> nearest(n);
    for (int i = 0; i < n; ++i) nearest[i] = sq_dist(points[i], points[chosen[0]]);
    while (static_cast<int>(chosen.size()) < k) {
      const int far = static_cast<int>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
      chosen.push_back(far);
      for (int i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_dist(points[i], points[far]));
    }
    std::vector<std::vector<double>> centroids;
    for (int c : chosen) centroids.push_back(points[c]);

    LloydRun run = lloyd(points, std::move(centroids), max_iterations);
    best.traces.push_back(run.trace);
    if (run.inertia < best.inertia) {
      best.inertia = run.inertia;
      best_labels = run.labels;
    }
  }
  best.partition = Partition(best_labels);
  return best;
}

Partition kmeans(const std::vector<NodeFeatures>& features, int k, int restarts, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("kmeans: k must be at least 2");
  if (k > static_cast<int>(features.size()))
    throw InvalidArgument("kmeans: k=" + std::to_string(k) + " exceeds " + std::to_string(features.size()) + " nodes");
  std::vector<std::vector<double>> pts;
  for (const auto& f : features) pts.push_back(f.values);
  return kmeans_points(standardize(pts), k, restarts, seed).partition;
}

// ---------------------------------------------------------------------------
// Model selection and voting

KSelection choose_k_silhouette(const std::vector<std::vector<double>>& items, int k_min, int k_max,
                               const DistanceKind& kind, Clusterer clusterer, const ClusterOptions& options) {
  const int n = static_cast<int>(items.size());
  if (k_min > k_max) throw InvalidArgument("choose_k: empty k range");
  if (k_min < 2 || k_max > n)
    throw InvalidArgument("choose_k: range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                          "] must lie within [2, " + std::to_string(n) + "]");

  const std::vector<std::vector<double>> space = clusterer == Clusterer::kmeans ? standardize(items) : items;
  const Matrix dist = pairwise_distances(space, kind);
  std::vector<double> means;
  if (clusterer == Clusterer::wkmeans)
    for (const auto& s : items) means.push_back(std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size()));

  KSelection sel;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = k_min; k <= k_max; ++k) {
    Partition p = clusterer == Clusterer::kmeans
                      ? kmeans_points(space, k, options.kmeans_restarts, options.seed).partition
                      : wkmeans_run(dist, means, k, options.wk_iterations).partition;
    const double score = p.num_clusters() < 2 ? 0.0 : silhouette(dist, p);
    sel.scores[k] = score;
    if (score > best) {
      best = score;
      sel.k = k;
      sel.partition = std::move(p);
    }
  }
  return sel;
}

Partition vote_global_pattern(const std::vector<Partition>& partitions, std::span<const double> node_volumes) {
  if (partitions.empty()) throw InvalidArgument("vote_global_pattern: no partitions");
  if (node_volumes.size() != partitions.size())
    throw InvalidArgument("vote_global_pattern: one volume per partition required");
  for (const auto& p : partitions)
    if (p.size() != partitions[0].size()) throw InvalidArgument("vote_global_pattern: partitions differ in size");

  std::map<std::vector<int>, int> counts;
  for (const auto& p : partitions) ++counts[p.labels()];
  int top = 0;
  for (const auto& [_, c] : counts) top = std::max(top, c);

  std::vector<std::size_t> by_volume(partitions.size());
  std::iota(by_volume.begin(), by_volume.end(), 0);
  std::stable_sort(by_volume.begin(), by_volume.end(),
                   [&](std::size_t a, std::size_t b) { return node_volumes[a] > node_volumes[b]; });
  for (std::size_t i : by_volume)
    if (counts[partitions[i].labels()] == top) return partitions[i];
  return partitions[0];  // unreachable
}

std::string select_reference(std::span<const NodeVolume> members) {
  if (members.empty()) throw InvalidArgument("select_reference: empty cluster");
  const NodeVolume* best = &members[0];
  for (const auto& m : members)
    if (m.volume > best->volume || (m.volume == best->volume && m.node_id < best->node_id)) best = &m;
  return best->node_id;
}

std::string select_reference(std::span<const NodeDataset> members) {
  std::vector<NodeVolume> v;
  for (const auto& d : members) v.push_back({d.node_id, d.total_volume()});
  return select_reference(v);
}

std::string select_control(std::span<const NodeVolume> members) {
  if (members.empty()) throw InvalidArgument("select_control: empty cluster");
  const NodeVolume* best = &members[0];
  for (const auto& m : members)
    if (m.volume < best->volume || (m.volume == best->volume && m.node_id < best->node_id)) best = &m;
  return best->node_id;
}

}  // namespace transmuse
