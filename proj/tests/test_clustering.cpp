#include <doctest.h>

#include "transmuse/clustering.hpp"
#include "transmuse/errors.hpp"
#include "transmuse/synth.hpp"

#include <numeric>
#include <random>

using namespace transmuse;

namespace {

std::vector<double> constant(double v, std::size_t n = 6) { return std::vector<double>(n, v); }

std::vector<std::vector<double>> random_services(std::mt19937_64& rng, int count, std::size_t length) {
  std::lognormal_distribution<double> scale(2.0, 1.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::vector<double>> out;
  for (int s = 0; s < count; ++s) {
    const double base = scale(rng);
    std::vector<double> v(length);
    for (double& x : v) x = std::max(0.0, base * (1.0 + 0.3 * noise(rng)));
    out.push_back(std::move(v));
  }
  return out;
}

/// Every item sits at a center no farther than any other center.
void check_fixpoint(const std::vector<std::vector<double>>& series, const WkMeansResult& r) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double own = wasserstein_1d(series[i], series[r.centers[r.partition[i]]]);
    for (int c : r.centers) CHECK(own <= wasserstein_1d(series[i], series[c]) + 1e-12);
  }
}

}  // namespace

TEST_CASE("wkmeans separates a magnitude gap") {
  const std::vector<std::vector<double>> s{constant(1), constant(2), constant(10), constant(11)};
  CHECK(wkmeans(s, 2, 10) == Partition({0, 0, 1, 1}));
  CHECK(wkmeans_initial_centers(std::vector<double>{1, 2, 10, 11}, 2) == std::vector<int>{0, 2});
}

TEST_CASE("wkmeans with one cluster per service converges at once") {
  const std::vector<std::vector<double>> s{constant(4), constant(1), constant(9), constant(3), constant(7)};
  const auto r = wkmeans_run(s, 5, 10);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK(r.partition.num_clusters() == 5);
}

TEST_CASE("wkmeans on identical series terminates under the tie rule") {
  const std::vector<std::vector<double>> s(6, constant(3.0));
  const auto r = wkmeans_run(s, 2, 7);
  CHECK(r.iterations <= 7);
  CHECK(r.partition.num_clusters() == 1);  // every tie goes to the first center
}

TEST_CASE("wkmeans errors") {
  const std::vector<std::vector<double>> s{constant(1), constant(2)};
  CHECK_THROWS_AS(wkmeans(s, 3, 10), InvalidArgument);
  CHECK_THROWS_AS(wkmeans({}, 2, 10), InvalidArgument);
}

TEST_CASE("wkmeans reaches a nearest-center fixpoint within the iteration cap") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_services(rng, 20, 40);
    for (int n : {2, 3, 5}) {
      const auto r = wkmeans_run(s, n, 100);
      CHECK(r.iterations <= 100);
      REQUIRE(r.converged);
      check_fixpoint(s, r);
      // initialization is a pure function of the inputs
      CHECK(wkmeans_run(s, n, 100).partition == r.partition);
    }
  }
}

TEST_CASE("initial centers are lower medians of mean-ordered segments") {
  // 7 items, N = 3: segments of floor(7/3) = 2, remainder in the last one
  const std::vector<double> means{70, 10, 60, 20, 50, 30, 40};
  // order by mean: 1,3,5,6,4,2,0 -> segments [1,3] [5,6] [4,2,0]
  CHECK(wkmeans_initial_centers(means, 3) == std::vector<int>{1, 5, 2});
}

TEST_CASE("wd_medoid") {
  CHECK(wd_medoid({constant(4)}) == 0);
  CHECK(wd_medoid({constant(0), constant(5), constant(100)}) == 1);
  CHECK(wd_medoid(std::vector<std::vector<double>>(3, constant(2))) == 0);
}

TEST_CASE("node_features summarizes each service") {
  NodeDataset d;
  d.node_id = "n";
  d.length = 2;
  d.series.push_back({0, {2, 4}});
  CHECK(node_features(d).values == std::vector<double>{3.0, 1.0, 4.0, 2.0});

  NodeDataset c;
  c.node_id = "c";
  c.length = 3;
  c.series.push_back({0, {5, 5, 5}});
  CHECK(node_features(c).values == std::vector<double>{5.0, 0.0, 5.0, 5.0});

  NodeDataset wide;
  wide.node_id = "w";
  wide.length = 4;
  for (int k = 0; k < 20; ++k) wide.series.push_back({k, {1, 2, 3, 4}});
  CHECK(node_features(wide).values.size() == 80);
}

TEST_CASE("kmeans_points edge cases") {
  const std::vector<std::vector<double>> pts{{0, 0}, {1, 5}, {4, 2}, {9, 9}};
  const auto all = kmeans_points(pts, 4, 3, 1);
  CHECK(all.inertia == 0.0);
  CHECK(all.partition.num_clusters() == 4);

  const std::vector<std::vector<double>> dup{{1, 1}, {1, 1}, {5, 5}, {5, 5}, {1, 1}};
  const auto r = kmeans_points(dup, 2, 5, 3);
  CHECK(r.partition == Partition({0, 0, 1, 1, 0}));

  CHECK_THROWS_AS(kmeans_points(pts, 5, 1, 0), InvalidArgument);
}

TEST_CASE("kmeans inertia never increases within a restart") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> pts(40, std::vector<double>(3));
    for (auto& p : pts)
      for (double& x : p) x = g(rng);
    const auto r = kmeans_points(pts, 4, 5, static_cast<std::uint64_t>(trial));
    REQUIRE(r.traces.size() == 5);
    for (const auto& trace : r.traces)
      for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& trace : r.traces) best = std::min(best, trace.back());
    CHECK(r.inertia == doctest::Approx(best));
  }
}

TEST_CASE("choose_k_silhouette") {
  GenConfig c;
  c.num_nodes = 8;
  c.num_cohorts = 2;
  c.num_services = 6;
  c.num_days = 7;
  c.steps_per_day = 48;
  c.seed = 9;
  ProfileTemplate t;
  t.num_services = 6;
  c.service_profiles = make_profiles(t);
  std::vector<std::vector<double>> features;
  for (const auto& d : generate(c).nodes) features.push_back(node_features(d).values);
  const auto sel = choose_k_silhouette(features, 2, 4, DistanceKind::euclidean(), Clusterer::kmeans, {});
  CHECK(sel.k == 2);
  CHECK(sel.scores.size() == 3);

  const std::vector<std::vector<double>> same(5, {1.0, 2.0});
  const auto flat = choose_k_silhouette(same, 2, 4, DistanceKind::euclidean(), Clusterer::kmeans, {});
  CHECK(flat.k == 2);
  for (const auto& [k, s] : flat.scores) CHECK(s == 0.0);

  const std::vector<std::vector<double>> svc{constant(1), constant(2), constant(10), constant(11), constant(12)};
  CHECK(choose_k_silhouette(svc, 2, 3, DistanceKind::wasserstein(), Clusterer::wkmeans, {}).k == 2);

  CHECK_THROWS_AS(choose_k_silhouette(svc, 3, 2, DistanceKind::wasserstein(), Clusterer::wkmeans, {}),
                  InvalidArgument);
}

TEST_CASE("vote_global_pattern") {
  const Partition a({0, 0, 1, 1}), b({0, 1, 1, 1});
  CHECK(vote_global_pattern({a, a, b}, std::vector<double>{1, 1, 1}) == a);
  CHECK(vote_global_pattern({a, b}, std::vector<double>{10, 99}) == b);
  CHECK(vote_global_pattern({Partition({1, 1, 0, 0}), Partition({5, 5, 2, 2}), b}, std::vector<double>{1, 1, 50}) ==
        a);
  CHECK_THROWS_AS(vote_global_pattern({}, std::vector<double>{}), InvalidArgument);

  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> lab(0, 2);
  std::uniform_real_distribution<double> vol(0.0, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Partition> ps;
    std::vector<double> vols;
    for (int n = 0; n < 5; ++n) {
      std::vector<int> l(4);
      for (int& x : l) x = lab(rng);
      ps.emplace_back(l);
      vols.push_back(vol(rng));
    }
    const Partition winner = vote_global_pattern(ps, vols);
    CHECK(std::find(ps.begin(), ps.end(), winner) != ps.end());
  }
}

TEST_CASE("select_reference and select_control") {
  const std::vector<NodeVolume> v{{"n1", 100}, {"n2", 300}};
  CHECK(select_reference(v) == "n2");
  CHECK(select_control(v) == "n1");
  const std::vector<NodeVolume> one{{"solo", 5}};
  CHECK(select_reference(one) == "solo");
  const std::vector<NodeVolume> tie{{"b", 7}, {"a", 7}};
  CHECK(select_reference(tie) == "a");
  CHECK(select_control(tie) == "a");
}

TEST_CASE("partition canonicalization") {
  CHECK(Partition({2, 2, 0, 1}).labels() == std::vector<int>{0, 0, 1, 2});
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> lab(0, 6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> l(10);
    for (int& x : l) x = lab(rng);
    const auto once = canonicalize(l);
    CHECK(canonicalize(once) == once);
    std::vector<int> relabel(7);
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), rng);
    std::vector<int> permuted;
    for (int x : l) permuted.push_back(relabel[x]);
    CHECK(Partition(permuted) == Partition(l));
    CHECK(adjusted_rand_index(Partition(permuted), Partition(l)) == doctest::Approx(1.0));
  }
}
