#include "layers.hpp"

#include "transmuse/errors.hpp"

#include <cmath>
#include <random>

namespace transmuse {

void TmtpnConfig::validate() const {
  if (d_model < 1 || num_heads < 1 || enc_layers < 1 || dec_layers < 1 || d_ffn < 1 || input_steps < 1 ||
      horizon < 1 || num_services < 1 || batch_size < 1 || max_epochs < 0 || patience < 0)
    throw InvalidArgument("tmtpn config: counts must be positive");
  if (d_model % num_heads != 0) throw InvalidArgument("tmtpn config: d_model must be divisible by num_heads");
  if (d_model % 2 != 0) throw InvalidArgument("tmtpn config: d_model must be even for positional encoding");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("tmtpn config: dropout must lie in [0,1)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("tmtpn config: lr must be finite and >= 0");
  if (!(clip_norm >= 0.0)) throw InvalidArgument("tmtpn config: clip_norm must be >= 0");
}

TmtpnModel TmtpnModel::initialize(const TmtpnConfig& config) {
  const detail::Layout layout(config);
  TmtpnModel m;
  m.config = config;
  std::mt19937_64 rng(config.seed);
  for (const auto& spec : layout.tensors) {
    Matrix value;
    switch (spec.init) {
      case detail::TensorSpec::Init::zeros:
        value = Matrix::Zero(spec.rows, spec.cols);
        break;
      case detail::TensorSpec::Init::ones:
        value = Matrix::Ones(spec.rows, spec.cols);
        break;
      case detail::TensorSpec::Init::glorot: {
        const double limit = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
        std::uniform_real_distribution<double> u(-limit, limit);
        value.resize(spec.rows, spec.cols);
        for (Eigen::Index j = 0; j < spec.cols; ++j)
          for (Eigen::Index i = 0; i < spec.rows; ++i) value(i, j) = u(rng);
        break;
      }
    }
    m.parameters.push_back({spec.name, std::move(value)});
  }
  m.round_to_storage();
  return m;
}

const Matrix& TmtpnModel::parameter(const std::string& name) const {
  for (const auto& t : parameters)
    if (t.name == name) return t.value;
  throw InvalidArgument("no parameter named " + name);
}

std::size_t TmtpnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters) n += static_cast<std::size_t>(t.value.size());
  return n;
}

void TmtpnModel::round_to_storage() {
  for (auto& t : parameters) t.value = t.value.cast<float>().cast<double>();
}

bool TmtpnModel::all_finite() const {
  for (const auto& t : parameters)
    if (!t.value.allFinite()) return false;
  return true;
}

namespace {

void check_inputs(const TmtpnConfig& c, const Matrix& x) {
  if (x.rows() != c.input_steps || x.cols() != c.num_services)
    throw InvalidArgument("tmtpn: input must be " + std::to_string(c.input_steps) + "x" +
                          std::to_string(c.num_services) + ", got " + std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()));
  if (!x.allFinite()) throw InvalidArgument("tmtpn: non-finite input");
}

void check_targets(const TmtpnConfig& c, const Matrix& y) {
  if (y.rows() != c.horizon || y.cols() != c.num_services)
    throw InvalidArgument("tmtpn: target must be " + std::to_string(c.horizon) + "x" +
                          std::to_string(c.num_services));
  if (!y.allFinite()) throw InvalidArgument("tmtpn: non-finite target");
}

std::mt19937_64 dropout_stream(std::uint64_t seed, std::uint64_t step, std::size_t sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                    static_cast<std::uint32_t>(sample), 0xd20du};
  return std::mt19937_64(seq);
}

}  // namespace

Matrix forward_train(const TmtpnModel& model, const Matrix& x, const Matrix& y) {
  check_inputs(model.config, x);
  check_targets(model.config, y);
  const detail::Layout layout(model.config);
  const Matrix enc = detail::encode(layout, model.parameters, 0.0, x, nullptr, nullptr);
  return detail::decode(layout, model.parameters, 0.0, detail::shift_right(y), enc, nullptr, nullptr);
}

Matrix forecast(const TmtpnModel& model, const Matrix& x) {
  check_inputs(model.config, x);
  const auto& c = model.config;
  const detail::Layout layout(c);
  const Matrix enc = detail::encode(layout, model.parameters, 0.0, x, nullptr, nullptr);
  Matrix dec_in = Matrix::Zero(c.horizon, c.num_services);
  Matrix out(c.horizon, c.num_services);
  for (int step = 0; step < c.horizon; ++step) {
    const Matrix pred = detail::decode(layout, model.parameters, 0.0, dec_in.topRows(step + 1), enc, nullptr, nullptr);
    out.row(step) = pred.row(step);
    if (!out.row(step).allFinite())
      throw InvalidArgument("tmtpn: non-finite prediction at decode step " + std::to_string(step));
    if (step + 1 < c.horizon) dec_in.row(step + 1) = pred.row(step);
  }
  return out;
}

Matrix persistence_baseline(const Matrix& x, std::size_t horizon) {
  if (x.rows() < 1) throw InvalidArgument("persistence_baseline: empty input");
  return x.row(x.rows() - 1).replicate(static_cast<Eigen::Index>(horizon), 1);
}

namespace {

double accumulate_sample(const detail::Layout& layout, const TmtpnModel& model, const WindowSample& s,
                         std::mt19937_64* rng, double weight, detail::Grads* grads) {
  const auto& c = model.config;
  check_inputs(c, s.input);
  check_targets(c, s.target);
  const double rate = rng ? c.dropout : 0.0;
  detail::ForwardCache cache;
  const Matrix enc = detail::encode(layout, model.parameters, rate, s.input, rng, &cache);
  const Matrix pred = detail::decode(layout, model.parameters, rate, detail::shift_right(s.target), enc, rng, &cache);
  const Matrix diff = pred - s.target;
  const double n = static_cast<double>(diff.size());
  if (grads) detail::backward(layout, model.parameters, cache, diff * (2.0 * weight / n), *grads);
  return diff.squaredNorm() / n;
}

}  // namespace

LossAndGradients loss_and_gradients(const TmtpnModel& model, std::span<const WindowSample> samples, bool training) {
  if (samples.empty()) throw InvalidArgument("loss_and_gradients: no samples");
  const detail::Layout layout(model.config);
  LossAndGradients out;
  for (const auto& t : model.parameters) out.gradients.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  const double weight = 1.0 / static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::mt19937_64 rng = dropout_stream(model.config.seed, model.rng_state, i);
    const bool drop = training && model.config.dropout > 0.0;
    out.loss += weight * accumulate_sample(layout, model, samples[i], drop ? &rng : nullptr, weight, &out.gradients);
  }
  return out;
}

double evaluate_loss(const TmtpnModel& model, std::span<const WindowSample> samples) {
  if (samples.empty()) throw InvalidArgument("evaluate_loss: no samples");
  const detail::Layout layout(model.config);
  double total = 0.0;
  for (const auto& s : samples) total += accumulate_sample(layout, model, s, nullptr, 0.0, nullptr);
  return total / static_cast<double>(samples.size());
}

}  // namespace transmuse
