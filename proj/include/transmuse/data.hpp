#pragma once

// Multi-service traffic ingestion: per-node datasets, min-max normalization,
// chronological splitting and sliding-window sample extraction.

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace transmuse {

using Matrix = Eigen::MatrixXd;

/// One service's per-minute traffic volume (MB) at one node.
struct ServiceSeries {
  int service_id = 0;
  std::vector<double> values;
};

/// Aligned service series for one edge node. `series[k].service_id == k`.
struct NodeDataset {
  std::string node_id;
  std::vector<ServiceSeries> series;
  std::size_t length = 0;

  std::size_t num_services() const { return series.size(); }
  /// Sum of every value over services and time.
  double total_volume() const;
  /// length x K matrix, rows are time steps.
  Matrix to_matrix() const;
  /// Dataset restricted to the listed services, renumbered 0..n-1 in the given order.
  NodeDataset select_services(const std::vector<int>& service_ids) const;
  /// Throws ValidationError if any invariant is broken.
  void validate() const;
};

/// Build a dataset from a length x K matrix.
NodeDataset dataset_from_matrix(std::string node_id, const Matrix& m);

struct MinMax {
  double min = 0.0;
  double max = 0.0;
};

/// Per-service (min, max) of raw volume, indexed by service_id.
struct NormStats {
  std::vector<MinMax> per_service;

  NormStats select_services(const std::vector<int>& service_ids) const;
};

struct WindowSample {
  Matrix input;   // T x K
  Matrix target;  // F x K
  std::size_t origin_index = 0;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  NodeDataset train;
  NodeDataset val;
  NodeDataset test;
};

/// Reads `timestamp,node_id,service_id,volume_mb` rows. Returns one dataset per
/// node, ordered by node_id. Missing cells are zero.
std::vector<NodeDataset> load_csv(const std::filesystem::path& path);
std::vector<NodeDataset> parse_csv(std::istream& in);
void write_csv(const std::filesystem::path& path, const std::vector<NodeDataset>& nodes);

struct Normalized {
  NodeDataset dataset;
  NormStats stats;
};

/// Min-max scale every service to [0,1]. With `stats` given, those bounds are
/// applied and results clamped; otherwise bounds come from `dataset` itself.
Normalized normalize(const NodeDataset& dataset, const std::optional<NormStats>& stats = std::nullopt);

NodeDataset denormalize(const NodeDataset& dataset, const NormStats& stats);
/// Column k of `m` is mapped back with service k's bounds.
Matrix denormalize(const Matrix& m, const NormStats& stats);

DatasetSplit split(const NodeDataset& dataset, const SplitFractions& fractions = {});

std::vector<WindowSample> window(const NodeDataset& dataset, std::size_t input_steps,
                                 std::size_t horizon, std::size_t stride = 1);

}  // namespace transmuse
