// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "oracles.hpp"
#include "transmuse/cli.hpp"
#include "transmuse/clustering.hpp"
#include "transmuse/config.hpp"
#include "transmuse/metrics.hpp"
#include "transmuse/pipeline.hpp"
#include "transmuse/synth.hpp"
#include "transmuse/tmtpn.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

using namespace transmuse;

namespace {

const std::filesystem::path kConfigDir = TRANSMUSE_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "transmuse_acceptance" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<double> uniform_series(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// 1
Outcome wasserstein_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> len(1, 6);
  double worst = 0.0;
  for (int pair = 0; pair < 200; ++pair) {
    const std::size_t n = len(rng);
    const auto x = uniform_series(rng, n), y = uniform_series(rng, n);
    for (int p : {1, 2})
      worst = std::max(worst, std::abs(wasserstein_1d(x, y, p) - oracle::brute_force_wasserstein(x, y, p)));
  }
  return {worst <= 1e-9, fmt("200 pairs, W1 and W2, max |diff| = %.3g", worst)};
}

// 2
Outcome metric_axioms() {
  std::mt19937_64 rng(202);
  int violations = 0;
  for (int t = 0; t < 100; ++t) {
    const auto x = uniform_series(rng, 10), y = uniform_series(rng, 10), z = uniform_series(rng, 10);
    const double xy = wasserstein_1d(x, y), yx = wasserstein_1d(y, x), yz = wasserstein_1d(y, z);
    if (std::abs(xy - yx) > 1e-9) ++violations;
    if (wasserstein_1d(x, x) > 1e-9) ++violations;
    if (wasserstein_1d(x, z) > xy + yz + 1e-9) ++violations;
  }
  return {violations == 0, fmt("100 triples, %.0f violations", violations)};
}

// 3
Outcome wkmeans_fixpoint() {
  GenConfig c;
  c.num_nodes = 1;
  c.num_cohorts = 1;
  c.num_services = 20;
  c.num_days = 7;
  c.steps_per_day = 96;
  c.seed = 303;
  c.service_profiles = make_profiles(ProfileTemplate{});
  const auto node = generate(c).nodes.front();
  std::vector<std::vector<double>> series;
  for (const auto& s : node.series) series.push_back(s.values);
  const Matrix dist = pairwise_distances(series, DistanceKind::wasserstein());

  const int cap = 100;
  int max_iter = 0, off_center = 0;
  bool all_converged = true;
  for (int n = 2; n <= 5; ++n) {
    const auto r = wkmeans_run(series, n, cap);
    max_iter = std::max(max_iter, r.iterations);
    all_converged = all_converged && r.converged;
    for (std::size_t i = 0; i < series.size(); ++i) {
      const double own = dist(static_cast<Eigen::Index>(i), r.centers[r.partition[i]]);
      for (int center : r.centers)
        if (dist(static_cast<Eigen::Index>(i), center) < own - 1e-12) ++off_center;
    }
  }
  return {all_converged && max_iter <= cap && off_center == 0,
          fmt("N=2..5, max iterations %.0f of %.0f, %.0f services nearer another medoid", max_iter, cap, off_center)};
}

// 4
Outcome cohort_recovery() {
  GenConfig c;
  c.num_nodes = 8;
  c.num_cohorts = 2;
  c.num_services = 20;
  c.num_days = 14;
  c.steps_per_day = 1440;
  c.seed = 404;
  c.cohort_scale_jitter = 0.05;
  c.cohort_volume_ratio = 3.0;
  c.service_profiles = make_profiles(ProfileTemplate{});
  const auto g = generate(c);
  std::vector<std::vector<double>> features;
  for (const auto& d : g.nodes) features.push_back(node_features(d).values);
  const auto sel = choose_k_silhouette(features, 2, 4, DistanceKind::euclidean(), Clusterer::kmeans, {100, 10, 404});
  const double ari = adjusted_rand_index(sel.partition, g.truth.node_cohort);
  return {sel.k == 2 && ari == 1.0, fmt("chosen k = %.0f, ARI = %.4f", sel.k, ari)};
}

TmtpnConfig tiny_model() {
  TmtpnConfig c;
  c.d_model = 8;
  c.num_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.d_ffn = 16;
  c.dropout = 0.0;
  c.input_steps = 4;
  c.horizon = 2;
  c.num_services = 3;
  c.seed = 505;
  return c;
}

// 5
Outcome gradient_check() {
  auto model = TmtpnModel::initialize(tiny_model());
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<WindowSample> samples(3);
  for (auto& s : samples) {
    s.input = Matrix::NullaryExpr(4, 3, [&] { return u(rng); });
    s.target = Matrix::NullaryExpr(2, 3, [&] { return u(rng); });
  }
  const auto analytic = loss_and_gradients(model, samples).gradients;
  const auto loss = [&] { return evaluate_loss(model, samples); };
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t i = 0; i < model.parameters.size(); ++i) {
    Matrix& value = model.parameters[i].value;
    Matrix numeric(value.rows(), value.cols());
    for (Eigen::Index j = 0; j < value.size(); ++j) numeric(j) = oracle::central_difference(loss, value(j), 1e-5);
    const double denom = analytic[i].norm() + numeric.norm();
    const double err = denom < 1e-12 ? 0.0 : (analytic[i] - numeric).norm() / denom;
    if (err > worst) {
      worst = err;
      worst_name = model.parameters[i].name;
    }
  }
  return {worst < 1e-4, fmt("%.0f tensors, max relative error %.3g", static_cast<double>(model.parameters.size()), worst) +
                            " (" + worst_name + ")"};
}

// 6
Outcome causality() {
  auto c = tiny_model();
  c.horizon = 6;
  c.dec_layers = 2;
  const auto model = TmtpnModel::initialize(c);
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = Matrix::NullaryExpr(4, 3, [&] { return u(rng); });
    const Matrix y = Matrix::NullaryExpr(6, 3, [&] { return u(rng); });
    const Matrix base = forward_train(model, x, y);
    for (int t = 0; t < 6; ++t) {
      Matrix perturbed = y;
      perturbed.bottomRows(6 - t).array() += 5.0 * u(rng);  // targets t.. feed positions > t
      const Matrix out = forward_train(model, x, perturbed);
      worst = std::max(worst, (out.topRows(t + 1) - base.topRows(t + 1)).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-9, fmt("max change at earlier positions %.3g", worst)};
}

GenConfig single_node(std::uint64_t seed, int services, int families, double noise, double weekly_dip) {
  GenConfig c;
  c.num_nodes = 1;
  c.num_cohorts = 1;
  c.num_services = services;
  c.num_days = 28;
  c.steps_per_day = 48;
  c.seed = seed;
  c.cohort_scale_jitter = 0.0;
  ProfileTemplate t;
  t.num_services = services;
  t.num_families = families;
  t.noise_std = noise;
  t.weekly_dip = weekly_dip;
  c.service_profiles = make_profiles(t);
  return c;
}

ExperimentConfig single_node_experiment(const GenConfig& gen, std::uint64_t seed, int max_epochs, int stride) {
  ExperimentConfig e;
  e.gen = gen;
  e.input_steps = 30;
  e.horizon = 5;
  e.train_stride = stride;
  e.model.d_model = 16;
  e.model.num_heads = 2;
  e.model.enc_layers = 1;
  e.model.dec_layers = 1;
  e.model.d_ffn = 32;
  e.model.dropout = 0.0;
  e.model.lr = 0.005;
  e.model.batch_size = 32;
  e.model.max_epochs = max_epochs;
  e.model.patience = 10;
  e.seed = seed;
  return e;
}

// 7
Outcome learning_sanity() {
  const auto e = single_node_experiment(single_node(707, 2, 1, 0.0, 0.0), 707, 50, 1);
  const auto node = prepare_node(generate(e.gen).nodes.front(), e.split);
  const auto models = train_node_models(node, Partition(std::vector<int>(2, 0)), e);
  const auto model_err = evaluate_scheme(models, node.raw.test, node.stats, 30, 5, 1);
  const Forecaster persistence = [](const WindowSample& w) { return persistence_baseline(w.input, 5); };
  const auto base_err = evaluate_forecaster(persistence, node.raw.test, node.stats, 30, 5, 1);
  return {model_err.mae < base_err.mae,
          fmt("test MAE %.4f MB vs persistence %.4f MB after %.0f epochs", model_err.mae, base_err.mae,
              static_cast<double>(models[0].log.val_loss.size()))};
}

// 8
Outcome clustering_benefit() {
  double clustered = 0.0, joint = 0.0;
  std::string ks;
  for (std::uint64_t seed : {801u, 802u, 803u}) {
    auto e = single_node_experiment(single_node(seed, 8, 2, 0.05, 0.2), seed, 30, 2);
    const auto node = prepare_node(generate(e.gen).nodes.front(), e.split);
    std::vector<std::vector<double>> series;
    for (const auto& s : node.raw.train.series) series.push_back(s.values);
    const auto sel = choose_k_silhouette(series, 2, 5, DistanceKind::wasserstein(), Clusterer::wkmeans, {});
    ks += std::to_string(sel.k);
    clustered += evaluate_scheme(train_node_models(node, sel.partition, e), node.raw.test, node.stats, 30, 5, 1).mae / 3;
    joint += evaluate_scheme(train_node_models(node, Partition(std::vector<int>(8, 0)), e), node.raw.test, node.stats,
                             30, 5, 1)
                 .mae /
             3;
  }
  return {clustered <= joint,
          fmt("mean test MAE per-cluster %.4f MB vs single model %.4f MB", clustered, joint) + ", service k per seed " + ks};
}

// 9
Outcome transfer_fidelity() {
  auto config = load_config(kConfigDir / "acceptance_transfer.toml");
  config.out_dir.clear();
  const auto report = run_pipeline(config);
  double worst_ratio = 0.0, ctrl = 0.0, transfer = 0.0;
  int recipients = 0;
  for (const auto& id : report.plan.node_ids) {
    if (std::find(report.plan.references.begin(), report.plan.references.end(), id) != report.plan.references.end())
      continue;
    ++recipients;
    worst_ratio = std::max(worst_ratio, report.row(id, Scheme::transmuse).error.mae /
                                            report.row(id, Scheme::original).error.mae);
    ctrl += report.row(id, Scheme::ctrl_exp).error.rmse;
    transfer += report.row(id, Scheme::transmuse).error.rmse;
  }
  ctrl /= recipients;
  transfer /= recipients;
  return {worst_ratio <= 1.15 && ctrl > transfer,
          fmt("%.0f recipients, worst MAE ratio %.3f (limit 1.15), mean RMSE ctrl_exp %.4f vs transmuse %.4f",
              recipients, worst_ratio, ctrl, transfer)};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// 10
Outcome determinism() {
  std::string reports[2], tables[2];
  for (int run = 0; run < 2; ++run) {
    const auto dir = scratch("determinism" + std::to_string(run));
    std::ostringstream out, err;
    const int code = run_cli({"transfer", "--config", (kConfigDir / "smoke.toml").string(), "--out", dir.string()},
                             out, err);
    if (code != kExitOk) return {false, "transfer exited with " + std::to_string(code) + ": " + err.str()};
    auto j = nlohmann::json::parse(read_file(dir / "report.json"));
    j.erase("timing");
    reports[run] = j.dump(2);
    tables[run] = read_file(dir / "report.csv");
  }
  const bool same = reports[0] == reports[1] && tables[0] == tables[1];
  return {same, same ? "report.json (timing removed) and report.csv identical across two runs"
                     : "reports differ between runs"};
}

// 11
Outcome checkpoint_round_trip() {
  auto c = tiny_model();
  c.enc_layers = 2;
  c.dropout = 0.1;
  const auto dir = scratch("checkpoint");
  const auto model = TmtpnModel::initialize(c);
  save_checkpoint(model, dir / "a.tmse");
  save_checkpoint(load_checkpoint(dir / "a.tmse"), dir / "b.tmse");
  const auto a = read_file(dir / "a.tmse"), b = read_file(dir / "b.tmse");
  return {a == b && !a.empty(), fmt("%.0f bytes, files identical", static_cast<double>(a.size()))};
}

}  // namespace

int main() {
  const std::vector<std::tuple<int, const char*, double, std::function<Outcome()>>> criteria = {
      {1, "wasserstein oracle equivalence", 10.0, wasserstein_oracle},
      {2, "wasserstein metric axioms", 0.0, metric_axioms},
      {3, "wk-means fixpoint", 0.0, wkmeans_fixpoint},
      {4, "cohort recovery", 30.0, cohort_recovery},
      {5, "transformer gradient check", 60.0, gradient_check},
      {6, "teacher-forcing causality", 0.0, causality},
      {7, "learning sanity vs persistence", 600.0, learning_sanity},
      {8, "service clustering benefit", 0.0, clustering_benefit},
      {9, "transfer fidelity", 0.0, transfer_fidelity},
      {10, "report determinism", 0.0, determinism},
      {11, "checkpoint round-trip", 0.0, checkpoint_round_trip},
  };
  int failures = 0;
  for (const auto& [id, name, budget_s, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget_s > 0.0 && elapsed > budget_s) {
      o.pass = false;
      o.detail += fmt("; exceeded %.0f s budget", budget_s);
    }
    if (!o.pass) ++failures;
    std::printf("%s [%2d] %-32s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, name, elapsed, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
