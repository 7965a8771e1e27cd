#pragma once

// Service clustering (WK-means), node feature extraction and K-means node
// clustering, silhouette-driven cluster counts, global pattern voting and
// reference-node selection.

#include "transmuse/data.hpp"
#include "transmuse/metrics.hpp"
#include "transmuse/partition.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace transmuse {

struct WkMeansResult {
  Partition partition;
  std::vector<int> centers;  // item index of each cluster's center, in canonical label order
  int iterations = 0;
  bool converged = false;
};

/// Volume-ordered initialization followed by nearest-center assignment and
/// medoid center updates, on a precomputed distance matrix. `means` orders the
/// items for initialization. Assignment ties go to the lowest center index.
/// Stops once labels and centers are both unchanged, or after `max_iterations`.
WkMeansResult wkmeans_run(const Matrix& distances, std::span<const double> means, int num_clusters,
                          int max_iterations);

/// WK-means over raw service series with the given distance (1-D Wasserstein by default).
WkMeansResult wkmeans_run(const std::vector<std::vector<double>>& series, int num_clusters, int max_iterations,
                          const DistanceKind& kind = DistanceKind::wasserstein());

Partition wkmeans(const std::vector<std::vector<double>>& series, int num_clusters, int max_iterations);

/// The initial centers: items sorted by mean, cut into segments at multiples
/// of floor(S/N) with the remainder going to the last segment, lower median of
/// each segment. Returned as item indices.
std::vector<int> wkmeans_initial_centers(std::span<const double> means, int num_clusters);

/// Member minimizing the summed Wasserstein distance to the others; ties go to
/// the lowest index.
std::size_t wd_medoid(const std::vector<std::vector<double>>& members);
/// Medoid among `members` (indices into `distances`), returned as an item index.
int medoid(const Matrix& distances, std::span<const int> members);

struct NodeFeatures {
  std::string node_id;
  /// Per service: mean, population std, max, min of raw volume.
  std::vector<double> values;
};

NodeFeatures node_features(const NodeDataset& dataset);

/// Z-score each dimension across items. Constant dimensions become 0.
std::vector<std::vector<double>> standardize(const std::vector<std::vector<double>>& items);

struct KMeansResult {
  Partition partition;
  double inertia = 0.0;
  /// Inertia after each assignment step, one trace per restart.
  std::vector<std::vector<double>> traces;
};

/// Lloyd's algorithm with squared Euclidean distance on `points` as given.
/// Each restart seeds one uniformly drawn point then greedily adds the farthest
/// point; the lowest-inertia restart wins.
KMeansResult kmeans_points(const std::vector<std::vector<double>>& points, int k, int restarts, std::uint64_t seed,
                           int max_iterations = 300);

/// K-means on z-scored node feature vectors.
Partition kmeans(const std::vector<NodeFeatures>& features, int k, int restarts, std::uint64_t seed);

enum class Clusterer { wkmeans, kmeans };

struct ClusterOptions {
  int wk_iterations = 100;
  int kmeans_restarts = 10;
  std::uint64_t seed = 0;
};

struct KSelection {
  int k = 0;
  std::map<int, double> scores;
  Partition partition;  // the clustering at the chosen k
};

/// Cluster at every k in [k_min, k_max] and keep the best silhouette; ties go
/// to the smaller k. K-means items are z-scored first and scored on that
/// space. Clusterings that collapse to one cluster score 0.
KSelection choose_k_silhouette(const std::vector<std::vector<double>>& items, int k_min, int k_max,
                               const DistanceKind& kind, Clusterer clusterer, const ClusterOptions& options = {});

/// Most frequent canonical pattern. Ties favour the pattern held by the node
/// with the largest total volume.
Partition vote_global_pattern(const std::vector<Partition>& partitions, std::span<const double> node_volumes);

struct NodeVolume {
  std::string node_id;
  double volume = 0.0;
};

/// Highest total volume; ties to the lexicographically smallest id.
std::string select_reference(std::span<const NodeVolume> members);
std::string select_reference(std::span<const NodeDataset> members);
/// Lowest total volume; ties to the lexicographically smallest id.
std::string select_control(std::span<const NodeVolume> members);

}  // namespace transmuse
