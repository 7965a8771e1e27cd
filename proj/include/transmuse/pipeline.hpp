#pragma once

// End-to-end transfer experiment: node clustering, reference selection,
// service clustering on reference nodes, per-cluster model training and
// evaluation of the transfer schemes on every node's test split.

#include "transmuse/clustering.hpp"
#include "transmuse/data.hpp"
#include "transmuse/synth.hpp"
#include "transmuse/tmtpn.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace transmuse {

/// original: each node's own models. transmuse: the cluster reference's
/// models. ctrl_exp: the cluster's lowest-volume node's models.
enum class Scheme { original, transmuse, ctrl_exp };

std::string scheme_name(Scheme scheme);
Scheme parse_scheme(std::string_view name);

struct ExperimentConfig {
  /// Empty means the data is generated from `gen`.
  std::filesystem::path csv_path;
  GenConfig gen;
  SplitFractions split;
  int input_steps = 30;
  int horizon = 5;
  int train_stride = 1;
  int eval_stride = 1;
  int node_k_min = 2;
  int node_k_max = 4;
  int service_k_min = 2;
  int service_k_max = 5;
  DistanceKind service_distance = DistanceKind::wasserstein();
  int wk_iterations = 100;
  int kmeans_restarts = 10;
  /// Architecture and optimizer settings; input_steps, horizon, num_services
  /// and seed are filled in per model.
  TmtpnConfig model;
  std::vector<Scheme> schemes{Scheme::original, Scheme::transmuse, Scheme::ctrl_exp};
  /// Checkpoints and reports go here. Empty disables file output.
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;

  void validate() const;
};

/// CSV contents or generated data, checked for a shared length and service set.
std::vector<NodeDataset> load_nodes(const ExperimentConfig& config);

/// Chronological split plus the training-split statistics used for both
/// normalization and denormalization at that node.
struct PreparedNode {
  std::string node_id;
  DatasetSplit raw;
  NormStats stats;
  NodeDataset train, val, test;  // normalized
};

PreparedNode prepare_node(const NodeDataset& dataset, const SplitFractions& fractions);

struct ServiceRun {
  std::string node_id;
  KSelection selection;
};

struct TransferPlan {
  std::vector<std::string> node_ids;
  std::vector<double> node_volumes;  // training-split totals
  KSelection node_clusters;
  std::vector<std::string> references;  // by node cluster
  std::vector<std::string> controls;    // by node cluster
  std::vector<ServiceRun> service_runs; // one per reference node
  Partition service_clusters;

  int node_cluster_of(const std::string& node_id) const;
  /// Model source for `node_id` under `scheme`.
  std::string source_node(const std::string& node_id, Scheme scheme) const;
};

/// Node clustering and reference/control selection only.
TransferPlan plan_nodes(const std::vector<PreparedNode>& nodes, const ExperimentConfig& config);
/// `plan_nodes` followed by service clustering on every reference node and the vote.
TransferPlan plan_transfer(const std::vector<PreparedNode>& nodes, const ExperimentConfig& config);

struct ClusterModel {
  std::vector<int> services;  // service indices this model predicts
  TmtpnModel model;
  TrainLog log;
};

/// One model per service cluster, trained at a single node.
using NodeModels = std::vector<ClusterModel>;

/// Model settings for service cluster `cluster` with `num_services` outputs.
TmtpnConfig model_config(const ExperimentConfig& config, int cluster, int num_services);

NodeModels train_node_models(const PreparedNode& node, const Partition& service_clusters,
                             const ExperimentConfig& config);

/// Nodes whose models the requested schemes need.
std::set<std::string> model_sources(const TransferPlan& plan, const std::vector<Scheme>& schemes);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, const std::string& node_id, int cluster);
void save_node_models(const NodeModels& models, const std::filesystem::path& out_dir, const std::string& node_id);
NodeModels load_node_models(const Partition& service_clusters, const std::filesystem::path& out_dir,
                            const std::string& node_id);

struct ErrorPair {
  double mae = 0.0;
  double rmse = 0.0;
};

/// Maps a normalized window to a normalized F x K forecast. Real models only
/// read `input`.
using Forecaster = std::function<Matrix(const WindowSample&)>;

/// Forecasts every test window, denormalizes with `stats` and scores against
/// the raw test values; MAE and RMSE are taken over all windows stacked.
ErrorPair evaluate_forecaster(const Forecaster& forecaster, const NodeDataset& raw_test, const NormStats& stats,
                              int input_steps, int horizon, int stride);

/// The per-cluster models assembled into a full-width forecaster.
ErrorPair evaluate_scheme(const NodeModels& models, const NodeDataset& raw_test, const NormStats& stats,
                          int input_steps, int horizon, int stride);

struct ReportRow {
  std::string node_id;
  Scheme scheme;
  std::string source_node;
  ErrorPair error;
};

struct TrainingSummary {
  std::string node_id;
  int service_cluster = 0;
  int epochs = 0;
  int best_epoch = -1;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
};

struct StageTiming {
  double plan_s = 0.0;
  double train_s = 0.0;
  double evaluate_s = 0.0;
};

struct TransferReport {
  TransferPlan plan;
  std::vector<Scheme> schemes;
  std::vector<ReportRow> rows;  // node-major, schemes in requested order
  std::vector<TrainingSummary> training;
  StageTiming timing;

  const ReportRow& row(const std::string& node_id, Scheme scheme) const;
};

/// Every key except "timing" is a pure function of the configuration.
nlohmann::json report_to_json(const TransferReport& report);
std::string report_csv(const TransferReport& report);
/// Writes report.json and report.csv under `dir`, each via a rename so no
/// partial file is ever visible.
void write_report(const TransferReport& report, const std::filesystem::path& dir);

nlohmann::json node_clusters_json(const TransferPlan& plan);
nlohmann::json service_clusters_json(const TransferPlan& plan);

/// Trained (or loaded) models for every node the schemes need.
using ModelStore = std::map<std::string, NodeModels>;

TransferReport evaluate_plan(const std::vector<PreparedNode>& nodes, const TransferPlan& plan,
                             const ModelStore& models, const ExperimentConfig& config);

/// All stages. Failures surface as StageError tagged with the stage name.
TransferReport run_pipeline(const ExperimentConfig& config);

/// Runs `body`, rethrowing library errors as StageError(stage, ...).
template <typename F>
auto run_stage(const char* stage, F&& body) -> decltype(body());

}  // namespace transmuse

#include "transmuse/errors.hpp"

namespace transmuse {

template <typename F>
auto run_stage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.kind(), e.what());
  } catch (const std::exception& e) {
    throw StageError(stage, "internal", e.what());
  }
}

}  // namespace transmuse
