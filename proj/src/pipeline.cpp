#include "transmuse/pipeline.hpp"

#include "transmuse/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace transmuse {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Clips [lo, hi] into [2, n]; empty when n < 2.
std::pair<int, int> clip_range(int lo, int hi, int n) {
  hi = std::min(hi, n);
  lo = std::min(std::max(lo, 2), hi);
  return {lo, hi};
}

KSelection single_cluster(std::size_t n) {
  KSelection s;
  s.k = 1;
  s.partition = Partition(std::vector<int>(n, 0));
  return s;
}

Matrix select_columns(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
  return out;
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

nlohmann::json scores_json(const std::map<int, double>& scores) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, s] : scores) j[std::to_string(k)] = s;
  return j;
}

nlohmann::json by_cluster_json(const std::vector<std::string>& ids) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t c = 0; c < ids.size(); ++c) j[std::to_string(c)] = ids[c];
  return j;
}

}  // namespace

std::string scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::original: return "original";
    case Scheme::transmuse: return "transmuse";
    case Scheme::ctrl_exp: return "ctrl_exp";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "original") return Scheme::original;
  if (name == "transmuse") return Scheme::transmuse;
  if (name == "ctrl_exp") return Scheme::ctrl_exp;
  throw InvalidArgument("unknown scheme '" + std::string(name) + "' (expected original, transmuse or ctrl_exp)");
}

void ExperimentConfig::validate() const {
  if (input_steps < 1 || horizon < 1) throw InvalidArgument("input_steps and horizon must be >= 1");
  if (train_stride < 1 || eval_stride < 1) throw InvalidArgument("strides must be >= 1");
  if (node_k_min < 2 || node_k_min > node_k_max)
    throw InvalidArgument("node cluster range must satisfy 2 <= min <= max");
  if (service_k_min < 2 || service_k_min > service_k_max)
    throw InvalidArgument("service cluster range must satisfy 2 <= min <= max");
  if (wk_iterations < 1 || kmeans_restarts < 1) throw InvalidArgument("iteration counts must be >= 1");
  if (schemes.empty()) throw InvalidArgument("at least one scheme is required");
  for (std::size_t i = 0; i < schemes.size(); ++i)
    for (std::size_t j = i + 1; j < schemes.size(); ++j)
      if (schemes[i] == schemes[j]) throw InvalidArgument("scheme " + scheme_name(schemes[i]) + " listed twice");
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
    throw InvalidArgument("split fractions must sum to 1");
  model_config(*this, 0, 1).validate();
  if (csv_path.empty()) gen.validate();
}

std::vector<NodeDataset> load_nodes(const ExperimentConfig& config) {
  std::vector<NodeDataset> nodes = config.csv_path.empty() ? generate(config.gen).nodes : load_csv(config.csv_path);
  if (nodes.empty()) throw ValidationError("no nodes in input data");
  for (const auto& d : nodes) {
    d.validate();
    if (d.length != nodes[0].length || d.num_services() != nodes[0].num_services())
      throw ValidationError("node " + d.node_id + " does not share the length and service set of " +
                            nodes[0].node_id);
  }
  return nodes;
}

PreparedNode prepare_node(const NodeDataset& dataset, const SplitFractions& fractions) {
  PreparedNode p;
  p.node_id = dataset.node_id;
  p.raw = split(dataset, fractions);
  auto train_norm = normalize(p.raw.train);
  p.stats = train_norm.stats;
  p.train = std::move(train_norm.dataset);
  p.val = normalize(p.raw.val, p.stats).dataset;
  p.test = normalize(p.raw.test, p.stats).dataset;
  return p;
}

// ---------------------------------------------------------------------------
// Planning

int TransferPlan::node_cluster_of(const std::string& node_id) const {
  const auto it = std::find(node_ids.begin(), node_ids.end(), node_id);
  if (it == node_ids.end()) throw InvalidArgument("unknown node " + node_id);
  return node_clusters.partition[static_cast<std::size_t>(it - node_ids.begin())];
}

std::string TransferPlan::source_node(const std::string& node_id, Scheme scheme) const {
  switch (scheme) {
    case Scheme::original: return node_id;
    case Scheme::transmuse: return references.at(static_cast<std::size_t>(node_cluster_of(node_id)));
    case Scheme::ctrl_exp: return controls.at(static_cast<std::size_t>(node_cluster_of(node_id)));
  }
  throw InvalidArgument("unknown scheme");
}

TransferPlan plan_nodes(const std::vector<PreparedNode>& nodes, const ExperimentConfig& config) {
  if (nodes.empty()) throw InvalidArgument("plan: no nodes");
  TransferPlan plan;
  std::vector<std::vector<double>> features;
  for (const auto& n : nodes) {
    plan.node_ids.push_back(n.node_id);
    plan.node_volumes.push_back(n.raw.train.total_volume());
    features.push_back(node_features(n.raw.train).values);
  }

  const int count = static_cast<int>(nodes.size());
  if (count < 2) {
    plan.node_clusters = single_cluster(nodes.size());
  } else {
    const auto [lo, hi] = clip_range(config.node_k_min, config.node_k_max, count);
    plan.node_clusters = choose_k_silhouette(features, lo, hi, DistanceKind::euclidean(), Clusterer::kmeans,
                                             {config.wk_iterations, config.kmeans_restarts, config.seed});
  }

  for (const auto& members : plan.node_clusters.partition.members()) {
    std::vector<NodeVolume> volumes;
    for (int i : members) volumes.push_back({plan.node_ids[i], plan.node_volumes[i]});
    plan.references.push_back(select_reference(volumes));
    plan.controls.push_back(select_control(volumes));
  }
  return plan;
}

TransferPlan plan_transfer(const std::vector<PreparedNode>& nodes, const ExperimentConfig& config) {
  TransferPlan plan = plan_nodes(nodes, config);
  const int services = static_cast<int>(nodes[0].raw.train.num_services());
  std::vector<Partition> patterns;
  std::vector<double> volumes;
  for (const auto& ref : plan.references) {
    const auto idx = static_cast<std::size_t>(
        std::find(plan.node_ids.begin(), plan.node_ids.end(), ref) - plan.node_ids.begin());
    ServiceRun run{ref, {}};
    if (services < 2) {
      run.selection = single_cluster(static_cast<std::size_t>(services));
    } else {
      std::vector<std::vector<double>> series;
      for (const auto& s : nodes[idx].raw.train.series) series.push_back(s.values);
      const auto [lo, hi] = clip_range(config.service_k_min, config.service_k_max, services);
      run.selection = choose_k_silhouette(series, lo, hi, config.service_distance, Clusterer::wkmeans,
                                          {config.wk_iterations, config.kmeans_restarts, config.seed});
    }
    patterns.push_back(run.selection.partition);
    volumes.push_back(plan.node_volumes[idx]);
    plan.service_runs.push_back(std::move(run));
  }
  plan.service_clusters = vote_global_pattern(patterns, volumes);
  return plan;
}

// ---------------------------------------------------------------------------
// Training

TmtpnConfig model_config(const ExperimentConfig& config, int cluster, int num_services) {
  TmtpnConfig c = config.model;
  c.input_steps = config.input_steps;
  c.horizon = config.horizon;
  c.num_services = num_services;
  c.seed = splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(cluster)));
  return c;
}

NodeModels train_node_models(const PreparedNode& node, const Partition& service_clusters,
                             const ExperimentConfig& config) {
  if (service_clusters.size() != node.train.num_services())
    throw InvalidArgument("service partition covers " + std::to_string(service_clusters.size()) +
                          " services, node " + node.node_id + " has " + std::to_string(node.train.num_services()));
  const auto T = static_cast<std::size_t>(config.input_steps), F = static_cast<std::size_t>(config.horizon);
  NodeModels out;
  const auto groups = service_clusters.members();
  for (std::size_t c = 0; c < groups.size(); ++c) {
    const auto& services = groups[c];
    const auto train_set = window(node.train.select_services(services), T, F, static_cast<std::size_t>(config.train_stride));
    const auto val_set = window(node.val.select_services(services), T, F, 1);
    const auto initial = TmtpnModel::initialize(model_config(config, static_cast<int>(c), static_cast<int>(services.size())));
    auto result = train(initial, train_set, val_set);
    out.push_back({services, std::move(result.model), std::move(result.log)});
  }
  return out;
}

std::set<std::string> model_sources(const TransferPlan& plan, const std::vector<Scheme>& schemes) {
  std::set<std::string> out;
  for (const auto& id : plan.node_ids)
    for (Scheme s : schemes) out.insert(plan.source_node(id, s));
  return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, const std::string& node_id, int cluster) {
  return out_dir / "models" / node_id / ("cluster" + std::to_string(cluster) + ".tmse");
}

void save_node_models(const NodeModels& models, const std::filesystem::path& out_dir, const std::string& node_id) {
  std::filesystem::create_directories(out_dir / "models" / node_id);
  for (std::size_t c = 0; c < models.size(); ++c)
    save_checkpoint(models[c].model, checkpoint_path(out_dir, node_id, static_cast<int>(c)));
}

NodeModels load_node_models(const Partition& service_clusters, const std::filesystem::path& out_dir,
                            const std::string& node_id) {
  NodeModels out;
  const auto groups = service_clusters.members();
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto model = load_checkpoint(checkpoint_path(out_dir, node_id, static_cast<int>(c)));
    if (model.config.num_services != static_cast<int>(groups[c].size()))
      throw ShapeError("checkpoint for " + node_id + " cluster " + std::to_string(c) + " predicts " +
                       std::to_string(model.config.num_services) + " services, plan expects " +
                       std::to_string(groups[c].size()));
    out.push_back({groups[c], std::move(model), {}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

ErrorPair evaluate_forecaster(const Forecaster& forecaster, const NodeDataset& raw_test, const NormStats& stats,
                              int input_steps, int horizon, int stride) {
  if (input_steps < 1 || horizon < 1 || stride < 1) throw InvalidArgument("evaluate: T, F and stride must be >= 1");
  const auto T = static_cast<std::size_t>(input_steps), F = static_cast<std::size_t>(horizon);
  if (raw_test.length < T + F)
    throw InvalidArgument("evaluate: test split of " + raw_test.node_id + " has " + std::to_string(raw_test.length) +
                          " steps, a window needs " + std::to_string(T + F));
  const auto raw_windows = window(raw_test, T, F, static_cast<std::size_t>(stride));
  const auto norm_windows = window(normalize(raw_test, stats).dataset, T, F, static_cast<std::size_t>(stride));

  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t w = 0; w < raw_windows.size(); ++w) {
    const Matrix pred = forecaster(norm_windows[w]);
    const Matrix& truth = raw_windows[w].target;
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
      throw ShapeError("forecaster returned " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                       ", expected " + std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
    const Matrix err = denormalize(pred, stats) - truth;
    abs_sum += err.cwiseAbs().sum();
    sq_sum += err.squaredNorm();
    count += static_cast<std::size_t>(err.size());
  }
  return {abs_sum / static_cast<double>(count), std::sqrt(sq_sum / static_cast<double>(count))};
}

ErrorPair evaluate_scheme(const NodeModels& models, const NodeDataset& raw_test, const NormStats& stats,
                          int input_steps, int horizon, int stride) {
  const auto K = static_cast<Eigen::Index>(raw_test.num_services());
  std::vector<bool> covered(static_cast<std::size_t>(K), false);
  for (const auto& m : models)
    for (int s : m.services) {
      if (s < 0 || s >= K || covered[s]) throw InvalidArgument("models must cover each service exactly once");
      covered[s] = true;
    }
  if (std::find(covered.begin(), covered.end(), false) != covered.end())
    throw InvalidArgument("models must cover each service exactly once");

  const Forecaster assembled = [&](const WindowSample& sample) {
    Matrix out(horizon, K);
    for (const auto& m : models) {
      const Matrix part = forecast(m.model, select_columns(sample.input, m.services));
      for (std::size_t i = 0; i < m.services.size(); ++i) out.col(m.services[i]) = part.col(static_cast<Eigen::Index>(i));
    }
    return out;
  };
  return evaluate_forecaster(assembled, raw_test, stats, input_steps, horizon, stride);
}

// ---------------------------------------------------------------------------
// Reports

const ReportRow& TransferReport::row(const std::string& node_id, Scheme scheme) const {
  for (const auto& r : rows)
    if (r.node_id == node_id && r.scheme == scheme) return r;
  throw InvalidArgument("report has no row for " + node_id + "/" + scheme_name(scheme));
}

nlohmann::json node_clusters_json(const TransferPlan& plan) {
  return {{"k", plan.node_clusters.k},
          {"node_ids", plan.node_ids},
          {"labels", plan.node_clusters.partition.labels()},
          {"silhouette_by_k", scores_json(plan.node_clusters.scores)},
          {"reference_nodes", by_cluster_json(plan.references)},
          {"control_nodes", by_cluster_json(plan.controls)}};
}

nlohmann::json service_clusters_json(const TransferPlan& plan) {
  // silhouette per k averaged over the reference nodes
  std::map<int, double> mean_scores;
  for (const auto& run : plan.service_runs)
    for (const auto& [k, s] : run.selection.scores) mean_scores[k] += s / static_cast<double>(plan.service_runs.size());
  nlohmann::json per_reference = nlohmann::json::array();
  for (const auto& run : plan.service_runs)
    per_reference.push_back({{"node_id", run.node_id},
                             {"k", run.selection.k},
                             {"labels", run.selection.partition.labels()},
                             {"silhouette_by_k", scores_json(run.selection.scores)}});
  return {{"k", plan.service_clusters.num_clusters()},
          {"labels", plan.service_clusters.labels()},
          {"silhouette_by_k", scores_json(mean_scores)},
          {"reference_nodes", by_cluster_json(plan.references)},
          {"per_reference", per_reference}};
}

nlohmann::json report_to_json(const TransferReport& report) {
  nlohmann::json schemes = nlohmann::json::array();
  for (Scheme s : report.schemes) schemes.push_back(scheme_name(s));

  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : report.rows)
    results.push_back({{"node_id", r.node_id},
                       {"scheme", scheme_name(r.scheme)},
                       {"source_node", r.source_node},
                       {"mae_mb", r.error.mae},
                       {"rmse_mb", r.error.rmse}});

  nlohmann::json summary = nlohmann::json::object();
  for (Scheme s : report.schemes) {
    double mae = 0.0, rmse = 0.0;
    std::size_t n = 0;
    for (const auto& r : report.rows)
      if (r.scheme == s) {
        mae += r.error.mae;
        rmse += r.error.rmse;
        ++n;
      }
    summary[scheme_name(s)] = {{"mean_mae_mb", mae / static_cast<double>(n)},
                               {"mean_rmse_mb", rmse / static_cast<double>(n)}};
  }

  nlohmann::json training = nlohmann::json::array();
  for (const auto& t : report.training)
    training.push_back({{"node_id", t.node_id},
                        {"service_cluster", t.service_cluster},
                        {"epochs", t.epochs},
                        {"best_epoch", t.best_epoch},
                        {"initial_val_loss", t.initial_val_loss},
                        {"best_val_loss", t.best_val_loss}});

  return {{"schemes", schemes},
          {"node_clusters", node_clusters_json(report.plan)},
          {"service_clusters", service_clusters_json(report.plan)},
          {"results", results},
          {"summary", summary},
          {"training", training},
          {"timing", {{"plan_s", report.timing.plan_s},
                      {"train_s", report.timing.train_s},
                      {"evaluate_s", report.timing.evaluate_s}}}};
}

std::string report_csv(const TransferReport& report) {
  std::string out = "node,scheme,mae_mb,rmse_mb\n";
  char buf[64];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", r.error.mae, r.error.rmse);
    out += r.node_id + "," + scheme_name(r.scheme) + buf;
  }
  return out;
}

void write_report(const TransferReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string json_text = report_to_json(report).dump(2) + "\n";
  const std::string csv_text = report_csv(report);
  write_atomically(dir / "report.json", json_text);
  write_atomically(dir / "report.csv", csv_text);
}

// ---------------------------------------------------------------------------
// Orchestration

TransferReport evaluate_plan(const std::vector<PreparedNode>& nodes, const TransferPlan& plan,
                             const ModelStore& models, const ExperimentConfig& config) {
  TransferReport report;
  report.plan = plan;
  report.schemes = config.schemes;
  for (const auto& node : nodes)
    for (Scheme s : config.schemes) {
      const std::string source = plan.source_node(node.node_id, s);
      const auto it = models.find(source);
      if (it == models.end()) throw InvalidArgument("no models trained at node " + source);
      const ErrorPair e =
          evaluate_scheme(it->second, node.raw.test, node.stats, config.input_steps, config.horizon, config.eval_stride);
      report.rows.push_back({node.node_id, s, source, e});
    }
  for (const auto& [node_id, node_models] : models)
    for (std::size_t c = 0; c < node_models.size(); ++c) {
      const auto& log = node_models[c].log;
      TrainingSummary t{node_id, static_cast<int>(c), static_cast<int>(log.val_loss.size()), log.best_epoch,
                        log.initial_val_loss, 0.0};
      if (log.best_epoch >= 0) t.best_val_loss = log.val_loss[static_cast<std::size_t>(log.best_epoch)];
      report.training.push_back(t);
    }
  return report;
}

TransferReport run_pipeline(const ExperimentConfig& config) {
  run_stage("config", [&] { config.validate(); });

  auto start = Clock::now();
  const auto nodes = run_stage("load", [&] {
    std::vector<PreparedNode> prepared;
    for (const auto& d : load_nodes(config)) prepared.push_back(prepare_node(d, config.split));
    return prepared;
  });
  const TransferPlan plan = run_stage("plan", [&] { return plan_transfer(nodes, config); });
  const double plan_s = seconds_since(start);

  start = Clock::now();
  const ModelStore models = run_stage("train", [&] {
    ModelStore store;
    for (const auto& id : model_sources(plan, config.schemes)) {
      const auto& node = *std::find_if(nodes.begin(), nodes.end(), [&](const PreparedNode& n) { return n.node_id == id; });
      store[id] = train_node_models(node, plan.service_clusters, config);
      if (!config.out_dir.empty()) save_node_models(store[id], config.out_dir, id);
    }
    return store;
  });
  const double train_s = seconds_since(start);

  start = Clock::now();
  TransferReport report = run_stage("evaluate", [&] { return evaluate_plan(nodes, plan, models, config); });
  report.timing = {plan_s, train_s, seconds_since(start)};

  if (!config.out_dir.empty()) run_stage("report", [&] { write_report(report, config.out_dir); });
  return report;
}

}  // namespace transmuse
