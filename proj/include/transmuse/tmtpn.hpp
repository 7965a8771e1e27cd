#pragma once

// Transformer encoder-decoder for multi-service traffic forecasting.
//
// Shapes follow the time-major convention used throughout the library: a
// sequence is a matrix whose rows are time steps. The encoder reads T input
// steps of K services, the decoder emits F future steps of K services.
// Training is teacher-forced with the right-shifted target and a look-ahead
// mask; inference decodes one step at a time.

#include "transmuse/data.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace transmuse {

using RowVector = Eigen::RowVectorXd;

struct TmtpnConfig {
  int d_model = 64;
  int num_heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int d_ffn = 128;
  double dropout = 0.1;
  int input_steps = 30;  // T
  int horizon = 5;       // F
  int num_services = 1;  // K
  double lr = 1e-3;
  int batch_size = 32;
  int max_epochs = 50;
  std::uint64_t seed = 0;
  /// Stop after this many epochs without a validation improvement; 0 disables.
  int patience = 0;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;

  void validate() const;
  friend bool operator==(const TmtpnConfig&, const TmtpnConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Parameters plus the configuration that fixes their shapes.
struct TmtpnModel {
  TmtpnConfig config;
  std::vector<NamedTensor> parameters;
  /// Number of optimizer steps taken; seeds the dropout stream of the next step.
  std::uint64_t rng_state = 0;

  /// Glorot-uniform weights, zero biases, unit layer-norm gains, seeded by config.seed.
  static TmtpnModel initialize(const TmtpnConfig& config);

  const Matrix& parameter(const std::string& name) const;
  std::size_t parameter_count() const;
  /// Round every parameter to the nearest 32-bit float, the checkpoint storage precision.
  void round_to_storage();
  bool all_finite() const;
};

struct TrainLog {
  double initial_val_loss = 0.0;  // before any update
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;  // index into val_loss
};

struct TrainResult {
  TmtpnModel model;
  TrainLog log;
};

// -- building blocks --------------------------------------------------------

/// Sinusoidal encoding: (pos, 2i) -> sin(pos / 10000^(2i/d)), (pos, 2i+1) -> cos(...).
Matrix positional_encoding(std::size_t length, std::size_t d_model);

/// F x F additive mask, -inf strictly above the diagonal, 0 elsewhere.
Matrix look_ahead_mask(std::size_t horizon);

/// Row-wise softmax(Q K^T / sqrt(d_k) + mask).
Matrix attention_weights(const Matrix& q, const Matrix& k, const Matrix* mask = nullptr);
Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix* mask = nullptr);

struct MultiHeadAttentionParams {
  Matrix w_query;   // d_model x d_model
  Matrix w_key;     // d_model x d_model
  Matrix w_value;   // d_model x d_model
  Matrix w_output;  // d_model x d_model
  RowVector b_output;
  int num_heads = 1;
};

Matrix multi_head_attention(const MultiHeadAttentionParams& params, const Matrix& q_in, const Matrix& k_in,
                            const Matrix& v_in, const Matrix* mask = nullptr);

// -- model ------------------------------------------------------------------

/// Teacher-forced pass with dropout disabled: the decoder reads [0; Y_1..Y_{F-1}].
Matrix forward_train(const TmtpnModel& model, const Matrix& x, const Matrix& y);

/// Autoregressive decoding from a zero start row, F steps.
Matrix forecast(const TmtpnModel& model, const Matrix& x);

/// Every row equals the last input row.
Matrix persistence_baseline(const Matrix& x, std::size_t horizon);

struct LossAndGradients {
  double loss = 0.0;
  std::vector<Matrix> gradients;  // aligned with model.parameters
};

/// Mean-squared teacher-forced loss over `samples` and its exact gradient.
/// With `training` set, dropout is active and drawn from the stream selected
/// by model.rng_state.
LossAndGradients loss_and_gradients(const TmtpnModel& model, std::span<const WindowSample> samples,
                                    bool training = false);

/// Teacher-forced mean-squared error with dropout disabled.
double evaluate_loss(const TmtpnModel& model, std::span<const WindowSample> samples);

/// Adam on shuffled mini-batches; keeps the parameters of the best validation epoch.
TrainResult train(const TmtpnModel& model, std::span<const WindowSample> train_samples,
                  std::span<const WindowSample> val_samples);

// -- checkpoints ------------------------------------------------------------

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Layout: "TMSE", version byte, u32 LE header length, JSON header
/// {config, rng_state, tensors: [{name, shape, offset}]}, then float32 LE payloads.
void save_checkpoint(const TmtpnModel& model, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const TmtpnModel& model);

TmtpnModel load_checkpoint(const std::filesystem::path& path);
TmtpnModel decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace transmuse
