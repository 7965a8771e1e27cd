#pragma once

// Distance kernels, forecast error metrics and silhouette scoring.

#include "transmuse/data.hpp"
#include "transmuse/partition.hpp"

#include <span>
#include <string>
#include <vector>

namespace transmuse {

enum class WassersteinMode {
  /// Series compared as empirical distributions of their values.
  value_distribution,
  /// Mass x_t / sum(x) placed at coordinate t, ground metric |t - t'|.
  temporal_mass,
};

struct DistanceKind {
  enum class Type { wasserstein, euclidean, cosine };

  Type type = Type::wasserstein;
  int p = 1;
  WassersteinMode mode = WassersteinMode::value_distribution;

  static DistanceKind wasserstein(int p = 1, WassersteinMode mode = WassersteinMode::value_distribution) {
    return {Type::wasserstein, p, mode};
  }
  static DistanceKind euclidean() { return {Type::euclidean, 2, WassersteinMode::value_distribution}; }
  static DistanceKind cosine() { return {Type::cosine, 2, WassersteinMode::value_distribution}; }

  std::string name() const;
  /// Accepts "wasserstein", "wasserstein2", "wasserstein-temporal", "euclidean", "cosine".
  static DistanceKind parse(const std::string& name);
};

/// Order-p Wasserstein distance between two 1-D series.
///
/// In value-distribution mode each series is the empirical distribution of its
/// values with uniform weights. Equal lengths use the sorted matching
/// ((1/n) sum |x_(i) - y_(i)|^p)^(1/p); unequal lengths integrate the difference
/// of the two quantile functions, which are piecewise constant on a grid of
/// n_x * n_y cells. Only p in {1, 2} is supported.
double wasserstein_1d(std::span<const double> x, std::span<const double> y, int p = 1,
                      WassersteinMode mode = WassersteinMode::value_distribution);

/// Same as `wasserstein_1d` for already ascending-sorted, value-distribution inputs.
double wasserstein_sorted(std::span<const double> xs, std::span<const double> ys, int p);

double euclidean_dist(std::span<const double> x, std::span<const double> y);
/// 1 - cos(x, y); throws on a zero vector.
double cosine_dist(std::span<const double> x, std::span<const double> y);

double distance(const DistanceKind& kind, std::span<const double> x, std::span<const double> y);

/// Symmetric n x n matrix of pairwise distances.
Matrix pairwise_distances(const std::vector<std::vector<double>>& items, const DistanceKind& kind);

/// Mean absolute error over every entry (rows are steps, columns services).
double mae(const Matrix& truth, const Matrix& pred);
/// Root mean squared error over every entry.
double rmse(const Matrix& truth, const Matrix& pred);

/// Mean silhouette over items, from a precomputed distance matrix. Items in
/// singleton clusters score 0, as does any item with a = b = 0.
double silhouette(const Matrix& distances, const Partition& labels);
double silhouette(const std::vector<std::vector<double>>& items, const Partition& labels, const DistanceKind& kind);

}  // namespace transmuse
