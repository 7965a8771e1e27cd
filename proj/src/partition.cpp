#include "transmuse/partition.hpp"

#include "transmuse/errors.hpp"

#include <map>

namespace transmuse {

std::vector<int> canonicalize(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto [it, _] = remap.try_emplace(l, static_cast<int>(remap.size()));
    out.push_back(it->second);
  }
  return out;
}

Partition::Partition(std::vector<int> labels) : labels_(canonicalize(labels)) {
  for (int l : labels_) num_clusters_ = std::max(num_clusters_, l + 1);
}

std::vector<std::vector<int>> Partition::members() const {
  std::vector<std::vector<int>> out(num_clusters_);
  for (std::size_t i = 0; i < labels_.size(); ++i) out[labels_[i]].push_back(static_cast<int>(i));
  return out;
}

double adjusted_rand_index(const Partition& a, const Partition& b) {
  if (a.size() != b.size()) throw InvalidArgument("partitions differ in size");
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;

  std::vector<std::vector<double>> table(a.num_clusters(), std::vector<double>(b.num_clusters(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) table[a[i]][b[i]] += 1.0;

  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_cells = 0.0;
  std::vector<double> row(a.num_clusters(), 0.0), col(b.num_clusters(), 0.0);
  for (int i = 0; i < a.num_clusters(); ++i)
    for (int j = 0; j < b.num_clusters(); ++j) {
      sum_cells += pairs(table[i][j]);
      row[i] += table[i][j];
      col[j] += table[i][j];
    }
  double sum_rows = 0.0, sum_cols = 0.0;
  for (double r : row) sum_rows += pairs(r);
  for (double c : col) sum_cols += pairs(c);

  const double expected = sum_rows * sum_cols / pairs(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;  // both trivial partitions
  return (sum_cells - expected) / (max_index - expected);
}

}  // namespace transmuse
