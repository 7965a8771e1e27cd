#pragma once

// Forward/backward kernels for the transformer. Each layer is a handful of
// parameter indices into the model's tensor list; forward passes fill a cache
// that the matching backward pass consumes.

#include "transmuse/tmtpn.hpp"

#include <random>
#include <string>
#include <vector>

namespace transmuse::detail {

using Params = std::vector<NamedTensor>;
using Grads = std::vector<Matrix>;

struct Linear {
  int weight = -1;
  int bias = -1;  // -1 when the projection has no bias

  Matrix forward(const Params& p, const Matrix& x) const;
  /// Accumulates parameter gradients, returns dL/dx.
  Matrix backward(const Params& p, Grads& g, const Matrix& x, const Matrix& dy) const;
};

struct LayerNorm {
  int gain = -1;
  int bias = -1;

  struct Cache {
    Matrix normalized;
    Eigen::VectorXd inv_std;
  };
  Matrix forward(const Params& p, const Matrix& x, Cache& cache) const;
  Matrix backward(const Params& p, Grads& g, const Cache& cache, const Matrix& dy) const;
};

struct Attention {
  Linear query, key, value, output;
  int num_heads = 1;

  struct Cache {
    Matrix q_in, k_in, v_in;
    Matrix q, k, v;
    std::vector<Matrix> weights;  // per head, T_q x T_k
    Matrix concat;
  };
  struct InputGrads {
    Matrix dq, dk, dv;
  };
  Matrix forward(const Params& p, const Matrix& q_in, const Matrix& k_in, const Matrix& v_in, const Matrix* mask,
                 Cache& cache) const;
  InputGrads backward(const Params& p, Grads& g, const Cache& cache, const Matrix& dy) const;
};

struct FeedForward {
  Linear in, out;

  struct Cache {
    Matrix x, hidden;  // hidden is post-ReLU
  };
  Matrix forward(const Params& p, const Matrix& x, Cache& cache) const;
  Matrix backward(const Params& p, Grads& g, const Cache& cache, const Matrix& dy) const;
};

/// Inverted dropout. An empty mask means identity.
struct Dropout {
  static Matrix forward(const Matrix& x, double rate, std::mt19937_64* rng, Matrix& mask);
  static Matrix backward(const Matrix& dy, const Matrix& mask);
};

struct EncoderLayer {
  Attention self_attn;
  LayerNorm norm1;
  FeedForward ffn;
  LayerNorm norm2;
};

struct DecoderLayer {
  Attention self_attn;
  LayerNorm norm1;
  Attention cross_attn;
  LayerNorm norm2;
  FeedForward ffn;
  LayerNorm norm3;
};

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  enum class Init { glorot, zeros, ones } init = Init::glorot;
};

/// Parameter inventory and layer wiring implied by a config.
struct Layout {
  std::vector<TensorSpec> tensors;
  Linear enc_embed, dec_embed, head;
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  Matrix enc_positions;  // T x d_model
  Matrix dec_positions;  // F x d_model
  Matrix mask;           // F x F

  explicit Layout(const TmtpnConfig& config);
};

/// Everything the backward pass needs from one teacher-forced forward pass.
struct ForwardCache {
  struct Enc {
    Attention::Cache attn;
    Matrix drop1;
    LayerNorm::Cache norm1;
    FeedForward::Cache ffn;
    Matrix drop2;
    LayerNorm::Cache norm2;
  };
  struct Dec {
    Attention::Cache self_attn;
    Matrix drop1;
    LayerNorm::Cache norm1;
    Attention::Cache cross_attn;
    Matrix drop2;
    LayerNorm::Cache norm2;
    FeedForward::Cache ffn;
    Matrix drop3;
    LayerNorm::Cache norm3;
  };
  Matrix x, dec_in;
  Matrix enc_drop, dec_drop;
  std::vector<Enc> enc;
  std::vector<Dec> dec;
  Matrix enc_out, dec_out;
};

Matrix softmax_rows(const Matrix& scores);

Matrix encode(const Layout& layout, const Params& p, double dropout, const Matrix& x, std::mt19937_64* rng,
              ForwardCache* cache);
/// Decoder over `dec_in` (rows = decoder positions) attending to `enc_out`.
Matrix decode(const Layout& layout, const Params& p, double dropout, const Matrix& dec_in, const Matrix& enc_out,
              std::mt19937_64* rng, ForwardCache* cache);

/// [0; y_0 .. y_{F-2}]
Matrix shift_right(const Matrix& y);

/// Backward through head, decoder and encoder given dL/dprediction.
void backward(const Layout& layout, const Params& p, const ForwardCache& cache, const Matrix& d_pred, Grads& g);

}  // namespace transmuse::detail
