#include "transmuse/metrics.hpp"

#include "transmuse/errors.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <limits>

namespace transmuse {

std::string DistanceKind::name() const {
  switch (type) {
    case Type::euclidean:
      return "euclidean";
    case Type::cosine:
      return "cosine";
    case Type::wasserstein:
      break;
  }
  std::string n = p == 2 ? "wasserstein2" : "wasserstein";
  if (mode == WassersteinMode::temporal_mass) n += "-temporal";
  return n;
}

DistanceKind DistanceKind::parse(const std::string& name) {
  if (name == "euclidean") return euclidean();
  if (name == "cosine") return cosine();
  if (name == "wasserstein") return wasserstein(1);
  if (name == "wasserstein2") return wasserstein(2);
  if (name == "wasserstein-temporal") return wasserstein(1, WassersteinMode::temporal_mass);
  if (name == "wasserstein2-temporal") return wasserstein(2, WassersteinMode::temporal_mass);
  throw InvalidArgument("unknown distance '" + name + "'");
}

namespace {

void check_order(int p) {
  if (p < 1) throw InvalidArgument("wasserstein order p must be >= 1");
  if (p > 2) throw InvalidArgument("wasserstein order p must be 1 or 2");
}

double cost(double a, double b, int p) {
  const double d = std::abs(a - b);
  return p == 1 ? d : d * d;
}

double finish(double mean_cost, int p) { return p == 1 ? mean_cost : std::sqrt(mean_cost); }

// Integral of |Fx^-1(u) - Fy^-1(u)|^p du for two discrete distributions with
// ascending support. Masses are consumed greedily, which walks the merged
// breakpoints of both quantile functions.
template <typename Mass>
double quantile_transport(std::span<const double> xs, std::span<const Mass> wx, std::span<const double> ys,
                          std::span<const Mass> wy, int p) {
  std::size_t i = 0, j = 0;
  Mass rx = wx[0], ry = wy[0];
  double acc = 0.0;
  while (i < xs.size() && j < ys.size()) {
    const Mass m = std::min(rx, ry);
    acc += static_cast<double>(m) * cost(xs[i], ys[j], p);
    rx -= m;
    ry -= m;
    if (rx == Mass{0} && ++i < xs.size()) rx = wx[i];
    if (ry == Mass{0} && ++j < ys.size()) ry = wy[j];
  }
  return acc;
}

void check_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidArgument("distance inputs must be finite");
}

}  // namespace

double wasserstein_sorted(std::span<const double> xs, std::span<const double> ys, int p) {
  check_order(p);
  if (xs.empty() || ys.empty()) throw InvalidArgument("wasserstein_1d: empty input");
  if (xs.size() == ys.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc += cost(xs[i], ys[i], p);
    return finish(acc / static_cast<double>(xs.size()), p);
  }
  // Integer masses: each x atom weighs n_y cells and each y atom n_x cells of
  // the common n_x * n_y grid, so the integration is exact.
  const std::vector<std::uint64_t> wx(xs.size(), ys.size());
  const std::vector<std::uint64_t> wy(ys.size(), xs.size());
  const double acc = quantile_transport<std::uint64_t>(xs, wx, ys, wy, p);
  return finish(acc / (static_cast<double>(xs.size()) * static_cast<double>(ys.size())), p);
}

double wasserstein_1d(std::span<const double> x, std::span<const double> y, int p, WassersteinMode mode) {
  check_order(p);
  if (x.empty() || y.empty()) throw InvalidArgument("wasserstein_1d: empty input");
  check_finite(x);
  check_finite(y);

  if (mode == WassersteinMode::value_distribution) {
    std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    return wasserstein_sorted(xs, ys, p);
  }

  auto masses = [](std::span<const double> v) {
    double total = 0.0;
    for (double a : v) {
      if (a < 0.0) throw InvalidArgument("temporal-mass wasserstein needs non-negative series");
      total += a;
    }
    if (total <= 0.0) throw InvalidArgument("temporal-mass wasserstein needs a series with positive mass");
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = v[i] / total;
    return w;
  };
  auto positions = [](std::size_t n) {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i);
    return t;
  };

  // Zero-mass atoms are dropped so the greedy walk never stalls on them.
  auto compact = [](std::vector<double> pos, std::vector<double> w) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i] > 0.0) {
        pos[k] = pos[i];
        w[k] = w[i];
        ++k;
      }
    pos.resize(k);
    w.resize(k);
    return std::pair{pos, w};
  };
  auto [px, wx] = compact(positions(x.size()), masses(x));
  auto [py, wy] = compact(positions(y.size()), masses(y));
  const double acc = quantile_transport<double>(px, wx, py, wy, p);
  return finish(std::max(acc, 0.0), p);
}

double euclidean_dist(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("euclidean_dist: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(acc);
}

double cosine_dist(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("cosine_dist: length mismatch");
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) throw InvalidArgument("cosine_dist: zero vector");
  const double c = std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
  return 1.0 - c;
}

double distance(const DistanceKind& kind, std::span<const double> x, std::span<const double> y) {
  switch (kind.type) {
    case DistanceKind::Type::euclidean:
      return euclidean_dist(x, y);
    case DistanceKind::Type::cosine:
      return cosine_dist(x, y);
    case DistanceKind::Type::wasserstein:
      return wasserstein_1d(x, y, kind.p, kind.mode);
  }
  throw InvalidArgument("unknown distance kind");
}

Matrix pairwise_distances(const std::vector<std::vector<double>>& items, const DistanceKind& kind) {
  const auto n = static_cast<Eigen::Index>(items.size());
  Matrix d = Matrix::Zero(n, n);
  if (kind.type == DistanceKind::Type::wasserstein && kind.mode == WassersteinMode::value_distribution) {
    // sort each series once
    std::vector<std::vector<double>> sorted = items;
    for (auto& s : sorted) {
      if (s.empty()) throw InvalidArgument("wasserstein_1d: empty input");
      check_finite(s);
      std::sort(s.begin(), s.end());
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = wasserstein_sorted(sorted[i], sorted[j], kind.p);
    return d;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = distance(kind, items[i], items[j]);
  return d;
}

namespace {

void check_shapes(const Matrix& truth, const Matrix& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw InvalidArgument("metric shape mismatch: " + std::to_string(truth.rows()) + "x" +
                          std::to_string(truth.cols()) + " vs " + std::to_string(pred.rows()) + "x" +
                          std::to_string(pred.cols()));
  if (truth.size() == 0) throw InvalidArgument("metrics need at least one entry");
}

}  // namespace

double mae(const Matrix& truth, const Matrix& pred) {
  check_shapes(truth, pred);
  return (truth - pred).cwiseAbs().sum() / static_cast<double>(truth.size());
}

double rmse(const Matrix& truth, const Matrix& pred) {
  check_shapes(truth, pred);
  return std::sqrt((truth - pred).squaredNorm() / static_cast<double>(truth.size()));
}

double silhouette(const Matrix& distances, const Partition& labels) {
  const auto n = labels.size();
  if (static_cast<std::size_t>(distances.rows()) != n || static_cast<std::size_t>(distances.cols()) != n)
    throw InvalidArgument("silhouette: distance matrix does not match label count");
  const int k = labels.num_clusters();
  if (k < 2) throw InvalidArgument("silhouette needs at least two clusters");

  std::vector<int> sizes(k, 0);
  for (int l : labels.labels()) ++sizes[l];

  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    const int own = labels[i];
    if (sizes[own] == 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[labels[j]] += distances(i, j);
    const double a = sums[own] / (sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sums[c] / sizes[c]);
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double silhouette(const std::vector<std::vector<double>>& items, const Partition& labels, const DistanceKind& kind) {
  return silhouette(pairwise_distances(items, kind), labels);
}

}  // namespace transmuse
