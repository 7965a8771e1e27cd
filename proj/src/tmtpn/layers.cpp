#include "layers.hpp"

#include "transmuse/errors.hpp"

#include <cmath>
#include <limits>

namespace transmuse {

Matrix positional_encoding(std::size_t length, std::size_t d_model) {
  if (length < 1) throw InvalidArgument("positional_encoding: length must be positive");
  if (d_model < 2 || d_model % 2 != 0) throw InvalidArgument("positional_encoding: d_model must be even");
  Matrix pe(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(d_model));
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  return pe;
}

Matrix look_ahead_mask(std::size_t horizon) {
  if (horizon < 1) throw InvalidArgument("look_ahead_mask: horizon must be positive");
  const auto n = static_cast<Eigen::Index>(horizon);
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = -std::numeric_limits<double>::infinity();
  return m;
}

Matrix attention_weights(const Matrix& q, const Matrix& k, const Matrix* mask) {
  if (q.cols() != k.cols()) throw InvalidArgument("attention: query and key widths differ");
  if (q.cols() == 0) throw InvalidArgument("attention: zero-width inputs");
  Matrix scores = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  if (mask) {
    if (mask->rows() != q.rows() || mask->cols() != k.rows())
      throw InvalidArgument("attention: mask must be T_q x T_k");
    scores += *mask;
  }
  return detail::softmax_rows(scores);
}

Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix* mask) {
  if (k.rows() != v.rows()) throw InvalidArgument("attention: key and value lengths differ");
  return attention_weights(q, k, mask) * v;
}

Matrix multi_head_attention(const MultiHeadAttentionParams& params, const Matrix& q_in, const Matrix& k_in,
                            const Matrix& v_in, const Matrix* mask) {
  const auto d = params.w_query.rows();
  if (params.num_heads < 1 || d % params.num_heads != 0)
    throw InvalidArgument("multi_head_attention: d_model must be divisible by num_heads");
  auto square = [d](const Matrix& w) { return w.rows() == d && w.cols() == d; };
  if (!square(params.w_query) || !square(params.w_key) || !square(params.w_value) || !square(params.w_output) ||
      params.b_output.size() != d)
    throw InvalidArgument("multi_head_attention: projection shapes must be d_model x d_model");
  if (q_in.cols() != d || k_in.cols() != d || v_in.cols() != d)
    throw InvalidArgument("multi_head_attention: inputs must have d_model columns");

  detail::Params p{{"q", params.w_query}, {"k", params.w_key}, {"v", params.w_value},
                   {"o", params.w_output}, {"ob", Matrix(params.b_output)}};
  detail::Attention attn{{0, -1}, {1, -1}, {2, -1}, {3, 4}, params.num_heads};
  detail::Attention::Cache cache;
  return attn.forward(p, q_in, k_in, v_in, mask, cache);
}

}  // namespace transmuse

namespace transmuse::detail {

Matrix softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double top = scores.row(r).maxCoeff();
    if (!std::isfinite(top)) throw InvalidArgument("attention: a row has no finite score");
    out.row(r) = (scores.row(r).array() - top).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------

Matrix Linear::forward(const Params& p, const Matrix& x) const {
  Matrix y = x * p[weight].value;
  if (bias >= 0) y.rowwise() += p[bias].value.row(0);
  return y;
}

Matrix Linear::backward(const Params& p, Grads& g, const Matrix& x, const Matrix& dy) const {
  g[weight].noalias() += x.transpose() * dy;
  if (bias >= 0) g[bias] += dy.colwise().sum();
  return dy * p[weight].value.transpose();
}

namespace {
constexpr double kNormEps = 1e-5;
}

Matrix LayerNorm::forward(const Params& p, const Matrix& x, Cache& cache) const {
  const auto d = static_cast<double>(x.cols());
  cache.normalized.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).matrix();
    const double var = centered.squaredNorm() / d;
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    cache.inv_std(r) = inv;
    cache.normalized.row(r) = centered * inv;
  }
  Matrix y = cache.normalized.array().rowwise() * p[gain].value.row(0).array();
  y.rowwise() += p[bias].value.row(0);
  return y;
}

Matrix LayerNorm::backward(const Params& p, Grads& g, const Cache& cache, const Matrix& dy) const {
  const auto d = static_cast<double>(dy.cols());
  g[gain] += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  g[bias] += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * p[gain].value.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double sum = dxhat.row(r).sum();
    const double dot = dxhat.row(r).dot(cache.normalized.row(r));
    dx.row(r) = (cache.inv_std(r) / d) *
                (d * dxhat.row(r).array() - sum - cache.normalized.row(r).array() * dot).matrix();
  }
  return dx;
}

Matrix Attention::forward(const Params& p, const Matrix& q_in, const Matrix& k_in, const Matrix& v_in,
                          const Matrix* mask, Cache& cache) const {
  cache.q_in = q_in;
  cache.k_in = k_in;
  cache.v_in = v_in;
  cache.q = query.forward(p, q_in);
  cache.k = key.forward(p, k_in);
  cache.v = value.forward(p, v_in);
  const auto d = cache.q.cols();
  const auto dk = d / num_heads;
  cache.weights.resize(num_heads);
  cache.concat.resize(q_in.rows(), d);
  for (int h = 0; h < num_heads; ++h) {
    cache.weights[h] = attention_weights(cache.q.middleCols(h * dk, dk), cache.k.middleCols(h * dk, dk), mask);
    cache.concat.middleCols(h * dk, dk).noalias() = cache.weights[h] * cache.v.middleCols(h * dk, dk);
  }
  return output.forward(p, cache.concat);
}

Attention::InputGrads Attention::backward(const Params& p, Grads& g, const Cache& cache, const Matrix& dy) const {
  const Matrix d_concat = output.backward(p, g, cache.concat, dy);
  const auto d = cache.q.cols();
  const auto dk = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix dq(cache.q.rows(), d), dk_(cache.k.rows(), d), dv(cache.v.rows(), d);
  for (int h = 0; h < num_heads; ++h) {
    const Matrix& a = cache.weights[h];
    const auto d_head = d_concat.middleCols(h * dk, dk);
    dv.middleCols(h * dk, dk).noalias() = a.transpose() * d_head;
    const Matrix da = d_head * cache.v.middleCols(h * dk, dk).transpose();
    const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
    const Matrix ds = a.array() * (da.colwise() - row_dot).array();
    dq.middleCols(h * dk, dk).noalias() = scale * ds * cache.k.middleCols(h * dk, dk);
    dk_.middleCols(h * dk, dk).noalias() = scale * ds.transpose() * cache.q.middleCols(h * dk, dk);
  }
  return {query.backward(p, g, cache.q_in, dq), key.backward(p, g, cache.k_in, dk_),
          value.backward(p, g, cache.v_in, dv)};
}

Matrix FeedForward::forward(const Params& p, const Matrix& x, Cache& cache) const {
  cache.x = x;
  cache.hidden = in.forward(p, x).cwiseMax(0.0);
  return out.forward(p, cache.hidden);
}

Matrix FeedForward::backward(const Params& p, Grads& g, const Cache& cache, const Matrix& dy) const {
  Matrix dh = out.backward(p, g, cache.hidden, dy);
  dh = (cache.hidden.array() > 0.0).select(dh, 0.0);
  return in.backward(p, g, cache.x, dh);
}

Matrix Dropout::forward(const Matrix& x, double rate, std::mt19937_64* rng, Matrix& mask) {
  if (!rng || rate <= 0.0) {
    mask.resize(0, 0);
    return x;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - rate);
  mask.resize(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) mask(i, j) = u(*rng) < rate ? 0.0 : keep;
  return x.cwiseProduct(mask);
}

Matrix Dropout::backward(const Matrix& dy, const Matrix& mask) {
  if (mask.size() == 0) return dy;
  return dy.cwiseProduct(mask);
}

// ---------------------------------------------------------------------------

Layout::Layout(const TmtpnConfig& c) {
  c.validate();
  auto add = [this](std::string name, Eigen::Index rows, Eigen::Index cols, TensorSpec::Init init) {
    tensors.push_back({std::move(name), rows, cols, init});
    return static_cast<int>(tensors.size() - 1);
  };
  auto linear = [&](const std::string& name, Eigen::Index in, Eigen::Index out, bool with_bias) {
    Linear l;
    l.weight = add(name + ".weight", in, out, TensorSpec::Init::glorot);
    if (with_bias) l.bias = add(name + ".bias", 1, out, TensorSpec::Init::zeros);
    return l;
  };
  auto norm = [&](const std::string& name) {
    LayerNorm n;
    n.gain = add(name + ".gain", 1, c.d_model, TensorSpec::Init::ones);
    n.bias = add(name + ".bias", 1, c.d_model, TensorSpec::Init::zeros);
    return n;
  };
  auto attention = [&](const std::string& name) {
    Attention a;
    a.query = linear(name + ".query", c.d_model, c.d_model, false);
    a.key = linear(name + ".key", c.d_model, c.d_model, false);
    a.value = linear(name + ".value", c.d_model, c.d_model, false);
    a.output = linear(name + ".output", c.d_model, c.d_model, true);
    a.num_heads = c.num_heads;
    return a;
  };
  auto ffn = [&](const std::string& name) {
    return FeedForward{linear(name + ".in", c.d_model, c.d_ffn, true), linear(name + ".out", c.d_ffn, c.d_model, true)};
  };

  enc_embed = linear("enc_embed", c.num_services, c.d_model, true);
  dec_embed = linear("dec_embed", c.num_services, c.d_model, true);
  for (int l = 0; l < c.enc_layers; ++l) {
    const std::string pre = "encoder." + std::to_string(l);
    EncoderLayer e;
    e.self_attn = attention(pre + ".self_attn");
    e.norm1 = norm(pre + ".norm1");
    e.ffn = ffn(pre + ".ffn");
    e.norm2 = norm(pre + ".norm2");
    encoder.push_back(e);
  }
  for (int l = 0; l < c.dec_layers; ++l) {
    const std::string pre = "decoder." + std::to_string(l);
    DecoderLayer dl;
    dl.self_attn = attention(pre + ".self_attn");
    dl.norm1 = norm(pre + ".norm1");
    dl.cross_attn = attention(pre + ".cross_attn");
    dl.norm2 = norm(pre + ".norm2");
    dl.ffn = ffn(pre + ".ffn");
    dl.norm3 = norm(pre + ".norm3");
    decoder.push_back(dl);
  }
  head = linear("head", c.d_model, c.num_services, true);

  enc_positions = positional_encoding(c.input_steps, c.d_model);
  dec_positions = positional_encoding(c.horizon, c.d_model);
  mask = look_ahead_mask(c.horizon);
}

Matrix shift_right(const Matrix& y) {
  Matrix s = Matrix::Zero(y.rows(), y.cols());
  if (y.rows() > 1) s.bottomRows(y.rows() - 1) = y.topRows(y.rows() - 1);
  return s;
}

Matrix encode(const Layout& layout, const Params& p, double dropout, const Matrix& x, std::mt19937_64* rng,
              ForwardCache* cache) {
  ForwardCache scratch;
  ForwardCache& c = cache ? *cache : scratch;
  c.x = x;
  Matrix h = layout.enc_embed.forward(p, x) + layout.enc_positions.topRows(x.rows());
  h = Dropout::forward(h, dropout, rng, c.enc_drop);
  c.enc.resize(layout.encoder.size());
  for (std::size_t l = 0; l < layout.encoder.size(); ++l) {
    const auto& layer = layout.encoder[l];
    auto& lc = c.enc[l];
    Matrix a = layer.self_attn.forward(p, h, h, h, nullptr, lc.attn);
    a = Dropout::forward(a, dropout, rng, lc.drop1);
    const Matrix h1 = layer.norm1.forward(p, h + a, lc.norm1);
    Matrix f = layer.ffn.forward(p, h1, lc.ffn);
    f = Dropout::forward(f, dropout, rng, lc.drop2);
    h = layer.norm2.forward(p, h1 + f, lc.norm2);
  }
  c.enc_out = h;
  return h;
}

Matrix decode(const Layout& layout, const Params& p, double dropout, const Matrix& dec_in, const Matrix& enc_out,
              std::mt19937_64* rng, ForwardCache* cache) {
  ForwardCache scratch;
  ForwardCache& c = cache ? *cache : scratch;
  const auto n = dec_in.rows();
  c.dec_in = dec_in;
  const Matrix mask = layout.mask.topLeftCorner(n, n);
  Matrix h = layout.dec_embed.forward(p, dec_in) + layout.dec_positions.topRows(n);
  h = Dropout::forward(h, dropout, rng, c.dec_drop);
  c.dec.resize(layout.decoder.size());
  for (std::size_t l = 0; l < layout.decoder.size(); ++l) {
    const auto& layer = layout.decoder[l];
    auto& lc = c.dec[l];
    Matrix a = layer.self_attn.forward(p, h, h, h, &mask, lc.self_attn);
    a = Dropout::forward(a, dropout, rng, lc.drop1);
    const Matrix h1 = layer.norm1.forward(p, h + a, lc.norm1);
    Matrix x = layer.cross_attn.forward(p, h1, enc_out, enc_out, nullptr, lc.cross_attn);
    x = Dropout::forward(x, dropout, rng, lc.drop2);
    const Matrix h2 = layer.norm2.forward(p, h1 + x, lc.norm2);
    Matrix f = layer.ffn.forward(p, h2, lc.ffn);
    f = Dropout::forward(f, dropout, rng, lc.drop3);
    h = layer.norm3.forward(p, h2 + f, lc.norm3);
  }
  c.dec_out = h;
  return layout.head.forward(p, h);
}

void backward(const Layout& layout, const Params& p, const ForwardCache& c, const Matrix& d_pred, Grads& g) {
  Matrix dh = layout.head.backward(p, g, c.dec_out, d_pred);
  Matrix d_enc = Matrix::Zero(c.enc_out.rows(), c.enc_out.cols());

  for (std::size_t l = layout.decoder.size(); l-- > 0;) {
    const auto& layer = layout.decoder[l];
    const auto& lc = c.dec[l];
    // h3 = norm3(h2 + drop(ffn(h2)))
    const Matrix d_sum3 = layer.norm3.backward(p, g, lc.norm3, dh);
    Matrix d_h2 = d_sum3 + layer.ffn.backward(p, g, lc.ffn, Dropout::backward(d_sum3, lc.drop3));
    // h2 = norm2(h1 + drop(cross(h1, enc)))
    const Matrix d_sum2 = layer.norm2.backward(p, g, lc.norm2, d_h2);
    const auto cross = layer.cross_attn.backward(p, g, lc.cross_attn, Dropout::backward(d_sum2, lc.drop2));
    d_enc += cross.dk + cross.dv;
    const Matrix d_h1 = d_sum2 + cross.dq;
    // h1 = norm1(h + drop(self(h)))
    const Matrix d_sum1 = layer.norm1.backward(p, g, lc.norm1, d_h1);
    const auto self = layer.self_attn.backward(p, g, lc.self_attn, Dropout::backward(d_sum1, lc.drop1));
    dh = d_sum1 + self.dq + self.dk + self.dv;
  }
  dh = Dropout::backward(dh, c.dec_drop);
  layout.dec_embed.backward(p, g, c.dec_in, dh);

  Matrix de = d_enc;
  for (std::size_t l = layout.encoder.size(); l-- > 0;) {
    const auto& layer = layout.encoder[l];
    const auto& lc = c.enc[l];
    const Matrix d_sum2 = layer.norm2.backward(p, g, lc.norm2, de);
    const Matrix d_h1 = d_sum2 + layer.ffn.backward(p, g, lc.ffn, Dropout::backward(d_sum2, lc.drop2));
    const Matrix d_sum1 = layer.norm1.backward(p, g, lc.norm1, d_h1);
    const auto self = layer.self_attn.backward(p, g, lc.attn, Dropout::backward(d_sum1, lc.drop1));
    de = d_sum1 + self.dq + self.dk + self.dv;
  }
  de = Dropout::backward(de, c.enc_drop);
  layout.enc_embed.backward(p, g, c.x, de);
}

}  // namespace transmuse::detail
