#include <doctest.h>

#include "transmuse/cli.hpp"
#include "transmuse/config.hpp"
#include "transmuse/errors.hpp"
#include "transmuse/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace transmuse;

namespace {

ExperimentConfig tiny_experiment(const std::filesystem::path& out_dir = {}) {
  ExperimentConfig c;
  c.gen.num_nodes = 4;
  c.gen.num_cohorts = 2;
  c.gen.num_services = 4;
  c.gen.num_days = 5;
  c.gen.steps_per_day = 24;
  c.gen.seed = 3;
  ProfileTemplate t;
  t.num_services = 4;
  c.gen.service_profiles = make_profiles(t);
  c.input_steps = 6;
  c.horizon = 2;
  c.train_stride = 3;
  c.eval_stride = 2;
  c.model.d_model = 8;
  c.model.num_heads = 2;
  c.model.enc_layers = 1;
  c.model.dec_layers = 1;
  c.model.d_ffn = 8;
  c.model.max_epochs = 2;
  c.model.batch_size = 8;
  c.kmeans_restarts = 3;
  c.out_dir = out_dir;
  c.seed = 5;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "transmuse_pipeline_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

NodeDataset periodic_node(std::size_t length) {
  NodeDataset d;
  d.node_id = "p";
  d.length = length;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> v(length);
    for (std::size_t t = 0; t < length; ++t) v[t] = 10.0 * (k + 1) + static_cast<double>(t % 10);
    d.series.push_back({k, v});
  }
  return d;
}

nlohmann::json without_timing(nlohmann::json j) {
  j.erase("timing");
  return j;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

const char* kTinyConfig = R"(# tiny end-to-end run
[gen]
num_nodes = 4
num_cohorts = 2
num_services = 4
num_days = 5
steps_per_day = 24

[window]
input_steps = 6
horizon = 2
train_stride = 3
eval_stride = 2

[clustering]
kmeans_restarts = 3

[model]
d_model = 8
num_heads = 2
enc_layers = 1
dec_layers = 1
d_ffn = 8
max_epochs = 2
batch_size = 8

[pipeline]
seed = 5
out_dir = "run"
schemes = ["original", "transmuse", "ctrl_exp"]
)";

}  // namespace

TEST_CASE("evaluate_forecaster aggregation") {
  const auto node = prepare_node(periodic_node(200), {});
  // the oracle stub reads the answer; test values lie inside the training range
  const Forecaster oracle = [](const WindowSample& w) { return w.target; };
  const auto perfect = evaluate_forecaster(oracle, node.raw.test, node.stats, 5, 3, 1);
  CHECK(perfect.mae == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(perfect.rmse <= 1e-9);

  NodeDataset flat;
  flat.node_id = "f";
  flat.length = 20;
  flat.series.push_back({0, std::vector<double>(20, 4.0)});
  const Forecaster persistence = [](const WindowSample& w) { return persistence_baseline(w.input, 3); };
  const auto p = evaluate_forecaster(persistence, flat, NormStats{{{0.0, 8.0}}}, 5, 3, 2);
  CHECK(p.mae == 0.0);
  CHECK(p.rmse == 0.0);

  // one window: the aggregate equals that window's metrics
  NodeDataset one = periodic_node(8);
  const NormStats stats{{{10.0, 19.0}, {20.0, 29.0}}};
  const auto e = evaluate_forecaster(persistence, one, stats, 5, 3, 1);
  const auto w = window(one, 5, 3);
  REQUIRE(w.size() == 1);
  const Matrix pred = persistence_baseline(w[0].input, 3);
  CHECK(e.mae == doctest::Approx(mae(w[0].target, pred)));
  CHECK(e.rmse == doctest::Approx(rmse(w[0].target, pred)));

  CHECK_THROWS_AS(evaluate_forecaster(persistence, one, stats, 6, 3, 1), InvalidArgument);
}

TEST_CASE("test windows never reach into the training split") {
  const auto d = periodic_node(137);
  const auto p = prepare_node(d, {});
  const std::size_t offset = p.raw.train.length + p.raw.val.length;
  CHECK(offset + p.raw.test.length == d.length);
  for (const auto& w : window(p.raw.test, 5, 2, 1))
    CHECK(w.origin_index + offset >= p.raw.train.length + p.raw.val.length);
  for (std::size_t t = 0; t < p.raw.test.length; ++t)
    CHECK(p.raw.test.series[1].values[t] == d.series[1].values[offset + t]);
}

TEST_CASE("pipeline report is complete, consistent and deterministic") {
  const auto dir = scratch("full");
  const auto config = tiny_experiment(dir);
  const auto report = run_pipeline(config);

  CHECK(report.rows.size() == 4 * 3);
  for (int n = 0; n < 4; ++n)
    for (Scheme s : config.schemes) {
      const auto& r = report.row("node0" + std::to_string(n), s);
      CHECK(r.error.mae >= 0.0);
      CHECK(r.error.rmse >= r.error.mae - 1e-12);
    }
  // a reference node evaluates the same models under both schemes
  for (const auto& ref : report.plan.references) {
    CHECK(report.row(ref, Scheme::transmuse).error.mae == report.row(ref, Scheme::original).error.mae);
    CHECK(report.row(ref, Scheme::transmuse).error.rmse == report.row(ref, Scheme::original).error.rmse);
  }
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(std::filesystem::exists(checkpoint_path(dir, report.plan.references[0], 0)));
  CHECK(slurp(dir / "report.csv").rfind("node,scheme,mae_mb,rmse_mb\n", 0) == 0);

  const auto again = run_pipeline(tiny_experiment());
  CHECK(without_timing(report_to_json(again)).dump() == without_timing(report_to_json(report)).dump());
}

TEST_CASE("a single node degenerates to one cluster") {
  auto c = tiny_experiment();
  c.gen.num_nodes = 1;
  c.gen.num_cohorts = 1;
  c.schemes = {Scheme::original, Scheme::transmuse};
  const auto report = run_pipeline(c);
  CHECK(report.plan.node_clusters.k == 1);
  CHECK(report.row("node00", Scheme::transmuse).error.mae == report.row("node00", Scheme::original).error.mae);
}

TEST_CASE("saved checkpoints evaluate like the trained models") {
  const auto dir = scratch("reload");
  const auto config = tiny_experiment(dir);
  std::vector<PreparedNode> nodes;
  for (const auto& d : load_nodes(config)) nodes.push_back(prepare_node(d, config.split));
  const auto plan = plan_transfer(nodes, config);
  const auto& ref = plan.references[0];
  const auto& node = *std::find_if(nodes.begin(), nodes.end(), [&](const auto& n) { return n.node_id == ref; });
  const auto trained = train_node_models(node, plan.service_clusters, config);
  save_node_models(trained, dir, ref);
  const auto loaded = load_node_models(plan.service_clusters, dir, ref);
  const auto a = evaluate_scheme(trained, node.raw.test, node.stats, 6, 2, 1);
  const auto b = evaluate_scheme(loaded, node.raw.test, node.stats, 6, 2, 1);
  CHECK(a.mae == b.mae);
  CHECK(a.rmse == b.rmse);
}

TEST_CASE("stage failures are tagged") {
  auto c = tiny_experiment();
  c.csv_path = "/nonexistent/traffic.csv";
  try {
    run_pipeline(c);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "load");
    CHECK(e.inner_kind() == "io");
  }
  c = tiny_experiment();
  c.horizon = 0;
  CHECK_THROWS_AS(run_pipeline(c), StageError);
}

TEST_CASE("config parsing") {
  std::istringstream in(kTinyConfig);
  Settings s = parse_settings(in);
  CHECK(s.at("pipeline.out_dir") == "run");
  CHECK(s.at("gen.num_nodes") == "4");
  apply_override(s, "model.lr=0.01");
  apply_override(s, "window.horizon = 3");
  const auto c = build_config(s, "/base");
  CHECK(c.model.lr == 0.01);
  CHECK(c.horizon == 3);
  CHECK(c.out_dir == std::filesystem::path("/base/run"));
  CHECK(c.schemes.size() == 3);
  CHECK(c.gen.seed == 5);
  CHECK(c.gen.service_profiles.size() == 4);

  Settings bad = s;
  bad["model.learning_rate"] = "1";
  CHECK_THROWS_AS(build_config(bad, "."), ValidationError);
  bad = s;
  bad["window.horizon"] = "3x";
  CHECK_THROWS_AS(build_config(bad, "."), ValidationError);
  bad = s;
  bad["pipeline.schemes"] = "original, magic";
  CHECK_THROWS_AS(build_config(bad, "."), ValidationError);
  CHECK_THROWS_AS(apply_override(s, "horizon=3"), InvalidArgument);

  std::istringstream inline_comment("[model]\nd_model = 8 # narrow\n");
  CHECK(parse_settings(inline_comment).at("model.d_model") == "8");
}

TEST_CASE("environment seed overrides the config seed") {
  const auto dir = scratch("env");
  std::ofstream(dir / "c.toml") << kTinyConfig;
  ::setenv("TRANSMUSE_SEED", "99", 1);
  const auto c = load_config(dir / "c.toml");
  ::unsetenv("TRANSMUSE_SEED");
  CHECK(c.seed == 99);
  CHECK(load_config(dir / "c.toml").seed == 5);
}

TEST_CASE("cli usage errors exit with 2") {
  std::string err;
  CHECK(cli({"frobnicate"}, nullptr, &err) == kExitUsage);
  CHECK(cli({}, nullptr, &err) == kExitUsage);
  CHECK(cli({"gen", "--config", "c.toml", "--bogus"}, nullptr, &err) == kExitUsage);
  CHECK(cli({"transfer", "--config", "/nonexistent/c.toml"}, nullptr, &err) == kExitUsage);
  CHECK(err.find("/nonexistent/c.toml") != std::string::npos);
  CHECK(nlohmann::json::parse(err).at("error") == "usage");
}

TEST_CASE("cli end to end") {
  const auto dir = scratch("cli");
  const auto cfg = (dir / "c.toml").string();
  std::ofstream(cfg) << kTinyConfig;

  CHECK(cli({"gen", "--config", cfg, "--out", (dir / "data").string()}) == kExitOk);
  CHECK(std::filesystem::exists(dir / "data" / "traffic.csv"));
  const auto truth = nlohmann::json::parse(slurp(dir / "data" / "ground_truth.json"));
  CHECK(truth.at("node_cohort") == std::vector<int>{0, 1, 0, 1});
  CHECK(truth.at("service_groups") == std::vector<int>{0, 0, 1, 1});

  const std::string csv = "data.csv=" + (dir / "data" / "traffic.csv").string();
  CHECK(cli({"ingest", "-c", cfg, "--set", csv}) == kExitOk);
  CHECK(cli({"cluster-nodes", "-c", cfg, "--set", csv}) == kExitOk);
  const auto nodes = nlohmann::json::parse(slurp(dir / "run" / "node_clusters.json"));
  for (const char* key : {"k", "labels", "silhouette_by_k", "reference_nodes"}) CHECK(nodes.contains(key));
  CHECK(cli({"cluster-services", "-c", cfg, "--set", csv}) == kExitOk);
  CHECK(std::filesystem::exists(dir / "run" / "service_clusters.json"));

  CHECK(cli({"train", "-c", cfg, "--set", csv}) == kExitOk);
  CHECK(cli({"eval", "-c", cfg, "--set", csv}) == kExitOk);
  const std::string from_eval = slurp(dir / "run" / "report.json");

  CHECK(cli({"transfer", "-c", cfg, "--set", csv, "--out", (dir / "t").string()}) == kExitOk);
  // saved checkpoints score exactly like the freshly trained models
  CHECK(nlohmann::json::parse(slurp(dir / "t" / "report.json")).at("results") ==
        nlohmann::json::parse(from_eval).at("results"));

  std::string table;
  CHECK(cli({"report", "-c", cfg, "--out", (dir / "t").string()}, &table) == kExitOk);
  CHECK(table.find("transmuse") != std::string::npos);

  // runtime failure: one machine-parsable line, exit 1
  std::string err;
  CHECK(cli({"transfer", "-c", cfg, "--set", "data.csv=/nonexistent.csv"}, nullptr, &err) == kExitFailure);
  CHECK(std::count(err.begin(), err.end(), '\n') == 1);
  const auto e = nlohmann::json::parse(err);
  CHECK(e.at("error") == "io");
  CHECK(e.at("stage") == "load");
}
