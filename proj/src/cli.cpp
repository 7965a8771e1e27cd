#include "transmuse/cli.hpp"

#include "transmuse/config.hpp"
#include "transmuse/errors.hpp"
#include "transmuse/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace transmuse {

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void error_line(std::ostream& err, const std::string& kind, const std::string& message, const std::string& stage = {}) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  if (!stage.empty()) j["stage"] = stage;
  err << j.dump() << '\n';
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<PreparedNode> prepare_all(const ExperimentConfig& config) {
  std::vector<PreparedNode> out;
  for (const auto& d : load_nodes(config)) out.push_back(prepare_node(d, config.split));
  return out;
}

const PreparedNode& find_node(const std::vector<PreparedNode>& nodes, const std::string& id) {
  const auto it = std::find_if(nodes.begin(), nodes.end(), [&](const PreparedNode& n) { return n.node_id == id; });
  if (it == nodes.end()) throw InvalidArgument("unknown node " + id);
  return *it;
}

int cmd_gen(const ExperimentConfig& c, const Options& o, std::ostream& out) {
  const std::filesystem::path dir = o.out.empty() ? c.out_dir / "data" : std::filesystem::path(o.out);
  const auto g = run_stage("gen", [&] { return generate(c.gen); });
  run_stage("write", [&] {
    std::filesystem::create_directories(dir);
    write_csv(dir / "traffic.csv", g.nodes);
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& n : g.nodes) ids.push_back(n.node_id);
    write_json(dir / "ground_truth.json", {{"node_ids", ids},
                                           {"node_cohort", g.truth.node_cohort.labels()},
                                           {"service_groups", g.truth.service_groups.labels()}});
  });
  out << "wrote " << g.nodes.size() << " nodes to " << (dir / "traffic.csv").string() << '\n';
  return kExitOk;
}

int cmd_ingest(const ExperimentConfig& c, std::ostream& out) {
  const auto nodes = run_stage("ingest", [&] { return prepare_all(c); });
  nlohmann::json list = nlohmann::json::array();
  for (const auto& n : nodes)
    list.push_back({{"node_id", n.node_id},
                    {"services", n.raw.train.num_services()},
                    {"train_steps", n.raw.train.length},
                    {"val_steps", n.raw.val.length},
                    {"test_steps", n.raw.test.length},
                    {"train_volume_mb", n.raw.train.total_volume()}});
  run_stage("write", [&] { write_json(c.out_dir / "ingest.json", {{"nodes", list}}); });
  out << "ingested " << nodes.size() << " nodes\n";
  return kExitOk;
}

int cmd_cluster(const ExperimentConfig& c, bool services, std::ostream& out) {
  const auto nodes = run_stage("load", [&] { return prepare_all(c); });
  const auto plan = run_stage("plan", [&] { return services ? plan_transfer(nodes, c) : plan_nodes(nodes, c); });
  run_stage("write", [&] {
    write_json(c.out_dir / "node_clusters.json", node_clusters_json(plan));
    if (services) write_json(c.out_dir / "service_clusters.json", service_clusters_json(plan));
  });
  out << "node clusters: " << plan.node_clusters.k;
  if (services) out << ", service clusters: " << plan.service_clusters.num_clusters();
  out << '\n';
  return kExitOk;
}

int cmd_train(const ExperimentConfig& c, std::ostream& out) {
  const auto nodes = run_stage("load", [&] { return prepare_all(c); });
  const auto plan = run_stage("plan", [&] { return plan_transfer(nodes, c); });
  nlohmann::json summary = nlohmann::json::array();
  run_stage("train", [&] {
    for (const auto& id : model_sources(plan, c.schemes)) {
      const auto models = train_node_models(find_node(nodes, id), plan.service_clusters, c);
      save_node_models(models, c.out_dir, id);
      for (std::size_t k = 0; k < models.size(); ++k)
        summary.push_back({{"node_id", id},
                           {"service_cluster", k},
                           {"epochs", models[k].log.val_loss.size()},
                           {"best_epoch", models[k].log.best_epoch},
                           {"initial_val_loss", models[k].log.initial_val_loss},
                           {"val_loss", models[k].log.val_loss}});
    }
  });
  run_stage("write", [&] {
    write_json(c.out_dir / "node_clusters.json", node_clusters_json(plan));
    write_json(c.out_dir / "service_clusters.json", service_clusters_json(plan));
    write_json(c.out_dir / "training.json", {{"models", summary}});
  });
  out << "trained " << summary.size() << " models under " << (c.out_dir / "models").string() << '\n';
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& c, std::ostream& out) {
  const auto nodes = run_stage("load", [&] { return prepare_all(c); });
  const auto plan = run_stage("plan", [&] { return plan_transfer(nodes, c); });
  const auto models = run_stage("load_models", [&] {
    ModelStore store;
    for (const auto& id : model_sources(plan, c.schemes)) store[id] = load_node_models(plan.service_clusters, c.out_dir, id);
    return store;
  });
  const auto report = run_stage("evaluate", [&] { return evaluate_plan(nodes, plan, models, c); });
  run_stage("report", [&] { write_report(report, c.out_dir); });
  out << "wrote " << (c.out_dir / "report.json").string() << '\n';
  return kExitOk;
}

int cmd_transfer(const ExperimentConfig& c, std::ostream& out) {
  const auto report = run_pipeline(c);
  out << "wrote " << (c.out_dir / "report.json").string() << " (" << report.rows.size() << " rows)\n";
  return kExitOk;
}

int cmd_report(const ExperimentConfig& c, std::ostream& out) {
  const auto path = c.out_dir / "report.json";
  const auto j = run_stage("report", [&] {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string() + "; run transfer or eval first");
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  });
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %-10s %14s %14s\n", "node", "scheme", "mae_mb", "rmse_mb");
  out << line;
  for (const auto& r : j.at("results")) {
    std::snprintf(line, sizeof line, "%-12s %-10s %14.6f %14.6f\n", r.at("node_id").get<std::string>().c_str(),
                  r.at("scheme").get<std::string>().c_str(), r.at("mae_mb").get<double>(), r.at("rmse_mb").get<double>());
    out << line;
  }
  for (const auto& [scheme, s] : j.at("summary").items()) {
    std::snprintf(line, sizeof line, "%-12s %-10s %14.6f %14.6f\n", "mean", scheme.c_str(), s.at("mean_mae_mb").get<double>(),
                  s.at("mean_rmse_mb").get<double>());
    out << line;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transfer-based multi-service edge traffic forecasting", "transmuse"};
  app.require_subcommand(1);
  Options o;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "generate synthetic traffic CSV and ground truth"},
      {"ingest", "load and validate traffic data"},
      {"cluster-nodes", "cluster edge nodes and pick reference nodes"},
      {"cluster-services", "cluster services on the reference nodes"},
      {"train", "train per-cluster models and write checkpoints"},
      {"eval", "evaluate saved checkpoints under every scheme"},
      {"transfer", "run every stage and write the transfer report"},
      {"report", "print a saved transfer report"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", o.config, "experiment config file")->required();
    sub->add_option("-s,--set", o.overrides, "override a setting, section.key=value");
    sub->add_option("-o,--out", o.out, name == "gen" ? "output directory for the CSV" : "run directory");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return kExitUsage;
  }

  if (!std::filesystem::exists(o.config)) {
    error_line(err, "usage", "config file not found: " + o.config);
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ExperimentConfig c = run_stage("config", [&] { return load_config(o.config, o.overrides); });
    if (command != "gen" && !o.out.empty()) c.out_dir = o.out;
    if (c.out_dir.empty()) c.out_dir = "run";

    if (command == "gen") return cmd_gen(c, o, out);
    if (command == "ingest") return cmd_ingest(c, out);
    if (command == "cluster-nodes") return cmd_cluster(c, false, out);
    if (command == "cluster-services") return cmd_cluster(c, true, out);
    if (command == "train") return cmd_train(c, out);
    if (command == "eval") return cmd_eval(c, out);
    if (command == "transfer") return cmd_transfer(c, out);
    return cmd_report(c, out);
  } catch (const StageError& e) {
    error_line(err, e.inner_kind(), e.what(), e.stage());
  } catch (const Error& e) {
    error_line(err, e.kind(), e.what());
  } catch (const std::exception& e) {
    error_line(err, "internal", e.what());
  }
  return kExitFailure;
}

}  // namespace transmuse
