#pragma once

#include <cstddef>
#include <vector>

namespace transmuse {

/// Cluster assignment in canonical form: labels are renumbered in order of
/// first occurrence, so two partitions compare equal iff they group the same
/// items regardless of the label values originally used.
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::vector<int> labels);

  const std::vector<int>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  int num_clusters() const { return num_clusters_; }
  int operator[](std::size_t i) const { return labels_[i]; }

  /// Item indices per cluster, each list ascending.
  std::vector<std::vector<int>> members() const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<int> labels_;
  int num_clusters_ = 0;
};

std::vector<int> canonicalize(const std::vector<int>& labels);

/// Chance-corrected Rand index between two labelings of the same items.
double adjusted_rand_index(const Partition& a, const Partition& b);

}  // namespace transmuse
