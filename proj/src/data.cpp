#include "transmuse/data.hpp"

#include "transmuse/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace transmuse {

double NodeDataset::total_volume() const {
  double total = 0.0;
  for (const auto& s : series)
    for (double v : s.values) total += v;
  return total;
}

Matrix NodeDataset::to_matrix() const {
  Matrix m(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(series.size()));
  for (std::size_t k = 0; k < series.size(); ++k)
    for (std::size_t t = 0; t < length; ++t) m(t, k) = series[k].values[t];
  return m;
}

NodeDataset NodeDataset::select_services(const std::vector<int>& service_ids) const {
  NodeDataset out;
  out.node_id = node_id;
  out.length = length;
  for (std::size_t i = 0; i < service_ids.size(); ++i) {
    const int id = service_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= series.size())
      throw InvalidArgument("service id " + std::to_string(id) + " out of range");
    out.series.push_back({static_cast<int>(i), series[id].values});
  }
  return out;
}

void NodeDataset::validate() const {
  if (length < 1) throw ValidationError("node " + node_id + ": empty dataset");
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    if (s.service_id != static_cast<int>(k))
      throw ValidationError("node " + node_id + ": service ids must be contiguous from 0");
    if (s.values.size() != length)
      throw ValidationError("node " + node_id + ": service " + std::to_string(k) + " has length " +
                            std::to_string(s.values.size()) + ", expected " + std::to_string(length));
    for (double v : s.values)
      if (!std::isfinite(v) || v < 0.0)
        throw ValidationError("node " + node_id + ": volumes must be finite and non-negative");
  }
}

NodeDataset dataset_from_matrix(std::string node_id, const Matrix& m) {
  NodeDataset d;
  d.node_id = std::move(node_id);
  d.length = static_cast<std::size_t>(m.rows());
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    ServiceSeries s{static_cast<int>(k), std::vector<double>(d.length)};
    for (Eigen::Index t = 0; t < m.rows(); ++t) s.values[t] = m(t, k);
    d.series.push_back(std::move(s));
  }
  return d;
}

NormStats NormStats::select_services(const std::vector<int>& service_ids) const {
  NormStats out;
  for (int id : service_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= per_service.size())
      throw InvalidArgument("normalization stats do not cover service " + std::to_string(id));
    out.per_service.push_back(per_service[id]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  field = trim(field);
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty())
    throw ParseError(line, std::string("invalid ") + what + " '" + std::string(field) + "'");
  return value;
}

struct Row {
  long long timestamp;
  std::string node;
  long long service;
  double volume;
};

}  // namespace

std::vector<NodeDataset> parse_csv(std::istream& in) {
  std::string text;
  std::size_t line_no = 0;
  std::vector<Row> rows;
  long long max_ts = -1;
  long long max_service = -1;

  if (!std::getline(in, text)) throw ParseError(1, "missing header row");
  ++line_no;
  {
    std::string header{trim(text)};
    if (header.rfind("\xEF\xBB\xBF", 0) == 0) header.erase(0, 3);
    if (header != "timestamp,node_id,service_id,volume_mb")
      throw ParseError(line_no, "expected header 'timestamp,node_id,service_id,volume_mb'");
  }

  while (std::getline(in, text)) {
    ++line_no;
    std::string_view sv = trim(text);
    if (sv.empty()) continue;
    std::string_view fields[4];
    std::size_t n = 0;
    while (true) {
      auto comma = sv.find(',');
      if (n == 4) throw ParseError(line_no, "too many fields");
      fields[n++] = sv.substr(0, comma);
      if (comma == std::string_view::npos) break;
      sv.remove_prefix(comma + 1);
    }
    if (n != 4) throw ParseError(line_no, "expected 4 fields, got " + std::to_string(n));

    Row r;
    r.timestamp = parse_number<long long>(fields[0], line_no, "timestamp");
    r.node = std::string(trim(fields[1]));
    r.service = parse_number<long long>(fields[2], line_no, "service_id");
    r.volume = parse_number<double>(fields[3], line_no, "volume_mb");
    if (r.node.empty()) throw ParseError(line_no, "empty node_id");
    if (r.timestamp < 0) throw ParseError(line_no, "negative timestamp");
    if (r.service < 0) throw ParseError(line_no, "negative service_id");
    if (!std::isfinite(r.volume)) throw ValidationError("line " + std::to_string(line_no) + ": non-finite volume");
    if (r.volume < 0.0)
      throw ValidationError("line " + std::to_string(line_no) + ": negative volume " + std::string(trim(fields[3])));
    max_ts = std::max(max_ts, r.timestamp);
    max_service = std::max(max_service, r.service);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError(line_no, "no data rows");

  const auto length = static_cast<std::size_t>(max_ts + 1);
  const auto services = static_cast<std::size_t>(max_service + 1);
  std::map<std::string, NodeDataset> nodes;
  for (const auto& r : rows) {
    auto [it, inserted] = nodes.try_emplace(r.node);
    auto& d = it->second;
    if (inserted) {
      d.node_id = r.node;
      d.length = length;
      for (std::size_t k = 0; k < services; ++k)
        d.series.push_back({static_cast<int>(k), std::vector<double>(length, 0.0)});
    }
    d.series[r.service].values[r.timestamp] = r.volume;
  }

  std::vector<NodeDataset> out;
  out.reserve(nodes.size());
  for (auto& [_, d] : nodes) out.push_back(std::move(d));
  return out;
}

std::vector<NodeDataset> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in);
}

void write_csv(const std::filesystem::path& path, const std::vector<NodeDataset>& nodes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "timestamp,node_id,service_id,volume_mb\n";
  char buf[64];
  for (const auto& d : nodes)
    for (std::size_t t = 0; t < d.length; ++t)
      for (const auto& s : d.series) {
        // %.17g round-trips doubles exactly
        std::snprintf(buf, sizeof buf, "%.17g", s.values[t]);
        out << t << ',' << d.node_id << ',' << s.service_id << ',' << buf << '\n';
      }
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Normalization

Normalized normalize(const NodeDataset& dataset, const std::optional<NormStats>& stats) {
  Normalized out;
  if (stats) {
    if (stats->per_service.size() < dataset.series.size())
      throw InvalidArgument("normalization stats cover " + std::to_string(stats->per_service.size()) +
                            " services, dataset has " + std::to_string(dataset.series.size()));
    out.stats = *stats;
    out.stats.per_service.resize(dataset.series.size());
  } else {
    for (const auto& s : dataset.series) {
      if (s.values.empty()) throw InvalidArgument("cannot derive stats from an empty series");
      auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
      out.stats.per_service.push_back({*lo, *hi});
    }
  }

  out.dataset = dataset;
  for (std::size_t k = 0; k < dataset.series.size(); ++k) {
    const auto [lo, hi] = out.stats.per_service[k];
    const double range = hi - lo;
    for (double& v : out.dataset.series[k].values) {
      if (range <= 0.0)
        v = 0.0;
      else
        v = std::clamp((v - lo) / range, 0.0, 1.0);
    }
  }
  return out;
}

NodeDataset denormalize(const NodeDataset& dataset, const NormStats& stats) {
  if (stats.per_service.size() < dataset.series.size())
    throw InvalidArgument("normalization stats do not cover every service");
  NodeDataset out = dataset;
  for (std::size_t k = 0; k < out.series.size(); ++k) {
    const auto [lo, hi] = stats.per_service[k];
    for (double& v : out.series[k].values) v = v * (hi - lo) + lo;
  }
  return out;
}

Matrix denormalize(const Matrix& m, const NormStats& stats) {
  if (stats.per_service.size() < static_cast<std::size_t>(m.cols()))
    throw InvalidArgument("normalization stats do not cover every service");
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    const auto [lo, hi] = stats.per_service[k];
    out.col(k) = m.col(k).array() * (hi - lo) + lo;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split and window

namespace {

NodeDataset slice(const NodeDataset& d, std::size_t begin, std::size_t count) {
  NodeDataset out;
  out.node_id = d.node_id;
  out.length = count;
  for (const auto& s : d.series)
    out.series.push_back({s.service_id, std::vector<double>(s.values.begin() + begin, s.values.begin() + begin + count)});
  return out;
}

}  // namespace

DatasetSplit split(const NodeDataset& dataset, const SplitFractions& f) {
  if (!(f.train > 0.0 && f.val > 0.0 && f.test > 0.0))
    throw InvalidArgument("split fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw InvalidArgument("split fractions must sum to 1");
  const auto n = dataset.length;
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.train));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.val));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw InvalidArgument("dataset of length " + std::to_string(n) + " is too short to split; a segment would be empty");
  return {slice(dataset, 0, n_train), slice(dataset, n_train, n_val),
          slice(dataset, n_train + n_val, n - n_train - n_val)};
}

std::vector<WindowSample> window(const NodeDataset& dataset, std::size_t input_steps, std::size_t horizon,
                                 std::size_t stride) {
  if (input_steps < 1 || horizon < 1 || stride < 1)
    throw InvalidArgument("window sizes and stride must be at least 1");
  if (dataset.length < input_steps + horizon)
    throw InvalidArgument("dataset " + dataset.node_id + " of length " + std::to_string(dataset.length) +
                          " is shorter than T+F=" + std::to_string(input_steps + horizon));
  const Matrix m = dataset.to_matrix();
  const auto T = static_cast<Eigen::Index>(input_steps);
  const auto F = static_cast<Eigen::Index>(horizon);
  std::vector<WindowSample> out;
  out.reserve((dataset.length - input_steps - horizon) / stride + 1);
  for (std::size_t origin = 0; origin + input_steps + horizon <= dataset.length; origin += stride) {
    const auto o = static_cast<Eigen::Index>(origin);
    out.push_back({m.middleRows(o, T), m.middleRows(o + T, F), origin});
  }
  return out;
}

}  // namespace transmuse
