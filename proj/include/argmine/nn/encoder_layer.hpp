#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "argmine/nn/layers.hpp"
#include "argmine/nn/tensor.hpp"

namespace argmine::nn {

/// Multi-head scaled dot-product self-attention over the rows of x.
template <class T>
class SelfAttention {
 public:
  Linear<T> query, key, value, output;

  // Replaces the attention distribution with a uniform one. Used to check
  // permutation equivariance of the position-free layer.
  bool uniform_attention = false;

  SelfAttention() = default;
  SelfAttention(const std::string& prefix, Eigen::Index dim, int heads, double attn_dropout)
      : query(prefix + ".self.query", dim, dim),
        key(prefix + ".self.key", dim, dim),
        value(prefix + ".self.value", dim, dim),
        output(prefix + ".output.dense", dim, dim),
        heads_(heads),
        dropout_(attn_dropout) {
    if (heads <= 0 || dim % heads != 0) throw std::invalid_argument("attention width must be divisible by head count");
  }

  int heads() const { return heads_; }

  Matrix<T> forward(const Matrix<T>& x, bool training, Rng* rng) {
    q_ = query.forward(x);
    k_ = key.forward(x);
    v_ = value.forward(x);
    const Eigen::Index n = x.rows(), dh = head_dim();
    const T scale = T(1.0 / std::sqrt(double(dh)));
    probs_.assign(heads_, Matrix<T>());
    dropped_.assign(heads_, Matrix<T>());
    drop_.assign(heads_, Dropout<T>(dropout_.rate()));
    Matrix<T> context(n, x.cols());
    for (int h = 0; h < heads_; ++h) {
      const auto cols = Eigen::seqN(h * dh, dh);
      if (uniform_attention) {
        probs_[h] = Matrix<T>::Constant(n, n, T(1) / T(n));
      } else {
        probs_[h] = (q_(Eigen::all, cols) * k_(Eigen::all, cols).transpose()) * scale;
        softmax_rows(probs_[h]);
      }
      dropped_[h] = drop_[h].forward(probs_[h], training, rng);
      context(Eigen::all, cols) = dropped_[h] * v_(Eigen::all, cols);
    }
    return output.forward(context);
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    const Matrix<T> dcontext = output.backward(dy);
    const Eigen::Index n = dy.rows(), dh = head_dim();
    const T scale = T(1.0 / std::sqrt(double(dh)));
    Matrix<T> dq = Matrix<T>::Zero(n, dy.cols()), dk = dq, dv = dq;
    for (int h = 0; h < heads_; ++h) {
      const auto cols = Eigen::seqN(h * dh, dh);
      const Matrix<T> dctx_h = dcontext(Eigen::all, cols);
      dv(Eigen::all, cols) = dropped_[h].transpose() * dctx_h;
      if (uniform_attention) continue;
      const Matrix<T> dprobs = drop_[h].backward(dctx_h * v_(Eigen::all, cols).transpose());
      const auto& a = probs_[h];
      Matrix<T> dscores = a.cwiseProduct(dprobs);
      const Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot = dscores.rowwise().sum();
      dscores -= (a.array().colwise() * row_dot.array()).matrix();
      dscores *= scale;
      dq(Eigen::all, cols) = dscores * k_(Eigen::all, cols);
      dk(Eigen::all, cols) = dscores.transpose() * q_(Eigen::all, cols);
    }
    Matrix<T> dx = query.backward(dq);
    dx += key.backward(dk);
    dx += value.backward(dv);
    return dx;
  }

  void collect(ParamList<T>& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
  }

 private:
  Eigen::Index head_dim() const { return query.out_features() / heads_; }

  int heads_ = 1;
  Dropout<T> dropout_;
  std::vector<Dropout<T>> drop_;
  Matrix<T> q_, k_, v_;
  std::vector<Matrix<T>> probs_, dropped_;
};

struct EncoderLayerOptions {
  Eigen::Index dim = 768;
  int heads = 8;
  Eigen::Index feedforward_dim = 2048;
  double dropout = 0.1;            // residual branches
  double attention_dropout = 0.1;  // attention probabilities
  bool inner_dropout = true;       // dropout after the feed-forward activation
  Activation activation = Activation::Relu;
  double layer_norm_eps = 1e-5;
};

/// Post-norm transformer encoder layer:
///   h = LN(x + Drop(Attn(x)));  y = LN(h + Drop(W2 Drop(act(W1 h)))).
template <class T>
class EncoderLayer {
 public:
  SelfAttention<T> attention;
  LayerNorm<T> attention_norm;
  Linear<T> intermediate;
  Linear<T> output;
  LayerNorm<T> output_norm;

  EncoderLayer() = default;
  EncoderLayer(const std::string& prefix, const EncoderLayerOptions& o)
      : attention(prefix + ".attention", o.dim, o.heads, o.attention_dropout),
        attention_norm(prefix + ".attention.output.LayerNorm", o.dim, o.layer_norm_eps),
        intermediate(prefix + ".intermediate.dense", o.dim, o.feedforward_dim),
        output(prefix + ".output.dense", o.feedforward_dim, o.dim),
        output_norm(prefix + ".output.LayerNorm", o.dim, o.layer_norm_eps),
        opts_(o),
        act_(o.activation),
        attn_drop_(o.dropout),
        inner_drop_(o.inner_dropout ? o.dropout : 0.0),
        out_drop_(o.dropout) {}

  const EncoderLayerOptions& options() const { return opts_; }

  Matrix<T> forward(const Matrix<T>& x, bool training, Rng* rng) {
    Matrix<T> a = attn_drop_.forward(attention.forward(x, training, rng), training, rng);
    const Matrix<T> h = attention_norm.forward(x + a);
    Matrix<T> f = inner_drop_.forward(act_.forward(intermediate.forward(h)), training, rng);
    f = out_drop_.forward(output.forward(f), training, rng);
    return output_norm.forward(h + f);
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    const Matrix<T> dsum2 = output_norm.backward(dy);
    Matrix<T> dh = dsum2;
    const Matrix<T> df = output.backward(out_drop_.backward(dsum2));
    dh += intermediate.backward(act_.backward(inner_drop_.backward(df)));
    const Matrix<T> dsum1 = attention_norm.backward(dh);
    Matrix<T> dx = dsum1;
    dx += attention.backward(attn_drop_.backward(dsum1));
    return dx;
  }

  void collect(ParamList<T>& out) {
    attention.collect(out);
    attention_norm.collect(out);
    intermediate.collect(out);
    output.collect(out);
    output_norm.collect(out);
  }

  /// Xavier init for projections, zero biases, unit norms.
  void init_xavier_weights(Rng& rng) {
    ParamList<T> ps;
    collect(ps);
    for (auto* p : ps)
      if (p->decay) init_xavier(*p, rng);
  }

 private:
  EncoderLayerOptions opts_;
  ActivationLayer<T> act_;
  Dropout<T> attn_drop_, inner_drop_, out_drop_;
};

/// Sinusoidal position codes, one row per position.
template <class T>
Matrix<T> sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
  Matrix<T> pe(length, dim);
  for (Eigen::Index pos = 0; pos < length; ++pos)
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -double(2 * (i / 2)) / double(dim));
      pe(pos, i) = T(i % 2 == 0 ? std::sin(double(pos) * freq) : std::cos(double(pos) * freq));
    }
  return pe;
}

}  // namespace argmine::nn
