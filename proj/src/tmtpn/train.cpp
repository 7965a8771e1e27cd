#include "transmuse/errors.hpp"
#include "transmuse/tmtpn.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>

namespace transmuse {

namespace {

// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  explicit Adam(const std::vector<NamedTensor>& params) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(std::vector<NamedTensor>& params, const std::vector<Matrix>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i].cwiseAbs2();
      params[i].value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

void clip(std::vector<Matrix>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm)
    for (auto& g : grads) g *= max_norm / norm;
}

}  // namespace

TrainResult train(const TmtpnModel& initial, std::span<const WindowSample> train_samples,
                  std::span<const WindowSample> val_samples) {
  if (train_samples.empty() || val_samples.empty()) throw InvalidArgument("train: sample sets must be non-empty");
  const auto& cfg = initial.config;
  cfg.validate();

  TrainResult result{initial, {}};
  TmtpnModel& model = result.model;
  TrainLog& log = result.log;
  log.initial_val_loss = evaluate_loss(model, val_samples);
  if (!std::isfinite(log.initial_val_loss)) throw DivergenceError(0, "non-finite validation loss before training");

  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq shuffle_seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                            0x51f7e5u};
  std::mt19937_64 shuffle_rng(shuffle_seq);

  Adam adam(model.parameters);
  std::vector<NamedTensor> best_params = model.parameters;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<WindowSample> batch;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_samples[order[i]]);

      LossAndGradients lg = loss_and_gradients(model, batch, true);
      if (!std::isfinite(lg.loss)) throw DivergenceError(epoch, "non-finite training loss");
      epoch_loss += lg.loss * static_cast<double>(batch.size());
      clip(lg.gradients, cfg.clip_norm);
      adam.step(model.parameters, lg.gradients, cfg.lr);
      model.round_to_storage();
      ++model.rng_state;
    }
    if (!model.all_finite()) throw DivergenceError(epoch, "non-finite parameters");

    const double val = evaluate_loss(model, val_samples);
    if (!std::isfinite(val)) throw DivergenceError(epoch, "non-finite validation loss");
    log.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    log.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_params = model.parameters;
      log.best_epoch = epoch - 1;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  if (log.best_epoch >= 0) model.parameters = std::move(best_params);
  return result;
}

}  // namespace transmuse
