#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "argmine/nn/tensor.hpp"

namespace argmine::nn {

/// y = x W^T + b with W stored (out x in), matching the usual checkpoint layout.
template <class T>
class Linear {
 public:
  Param<T> weight, bias;

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out)
      : weight(name + ".weight", out, in), bias(name + ".bias", 1, out, false) {}

  Eigen::Index in_features() const { return weight.value.cols(); }
  Eigen::Index out_features() const { return weight.value.rows(); }

  Matrix<T> forward(const Matrix<T>& x) {
    input_ = x;
    return infer(x);
  }

  Matrix<T> infer(const Matrix<T>& x) const {
    Matrix<T> y = x * weight.value.transpose();
    y.rowwise() += bias.value.row(0);
    return y;
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    weight.grad.noalias() += dy.transpose() * input_;
    bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

 private:
  Matrix<T> input_;
};

/// Row-wise layer normalization with affine parameters.
template <class T>
class LayerNorm {
 public:
  Param<T> gamma, beta;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim, double epsilon)
      : gamma(name + ".weight", 1, dim, false), beta(name + ".bias", 1, dim, false), eps(epsilon) {
    gamma.value.setOnes();
  }

  Matrix<T> forward(const Matrix<T>& x) {
    const Eigen::Index n = x.rows(), d = x.cols();
    normalized_.resize(n, d);
    inv_std_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const T mean = x.row(i).mean();
      const T var = (x.row(i).array() - mean).square().mean();
      inv_std_[i] = T(1) / std::sqrt(var + T(eps));
      normalized_.row(i) = (x.row(i).array() - mean) * inv_std_[i];
    }
    Matrix<T> y = normalized_.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    gamma.grad.row(0) += dy.cwiseProduct(normalized_).colwise().sum();
    beta.grad.row(0) += dy.colwise().sum();
    Matrix<T> dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const RowVector<T> dxhat = dy.row(i).cwiseProduct(gamma.value.row(0));
      const T mean_dxhat = dxhat.mean();
      const T mean_dxhat_xhat = dxhat.cwiseProduct(normalized_.row(i)).mean();
      dx.row(i) = inv_std_[i] * (dxhat.array() - mean_dxhat - normalized_.row(i).array() * mean_dxhat_xhat);
    }
    return dx;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

 private:
  Matrix<T> normalized_;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std_;
};

enum class Activation { Relu, Gelu };

template <class T>
class ActivationLayer {
 public:
  explicit ActivationLayer(Activation kind = Activation::Relu) : kind_(kind) {}

  Matrix<T> forward(const Matrix<T>& x) {
    input_ = x;
    return x.unaryExpr([this](T v) { return apply(v); });
  }

  Matrix<T> backward(const Matrix<T>& dy) const {
    return dy.binaryExpr(input_, [this](T g, T v) { return g * derivative(v); });
  }

  Activation kind() const { return kind_; }

 private:
  T apply(T v) const {
    if (kind_ == Activation::Relu) return v > T(0) ? v : T(0);
    // exact erf form
    return T(0.5) * v * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2)));
  }

  T derivative(T v) const {
    if (kind_ == Activation::Relu) return v > T(0) ? T(1) : T(0);
    const T cdf = T(0.5) * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2)));
    const T pdf = std::exp(T(-0.5) * v * v) * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + v * pdf;
  }

  Activation kind_;
  Matrix<T> input_;
};

/// Inverted dropout: kept units are scaled by 1 / (1 - p) during training.
template <class T>
class Dropout {
 public:
  explicit Dropout(double p = 0.0) : p_(p) {}

  Matrix<T> forward(const Matrix<T>& x, bool training, Rng* rng) {
    active_ = training && p_ > 0.0 && rng != nullptr;
    if (!active_) return x;
    std::bernoulli_distribution keep(1.0 - p_);
    const T scale = T(1.0 / (1.0 - p_));
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = keep(*rng) ? scale : T(0);
    return x.cwiseProduct(mask_);
  }

  Matrix<T> backward(const Matrix<T>& dy) const { return active_ ? Matrix<T>(dy.cwiseProduct(mask_)) : dy; }

  double rate() const { return p_; }

 private:
  double p_;
  bool active_ = false;
  Matrix<T> mask_;
};

template <class T>
void softmax_rows(Matrix<T>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const T mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace argmine::nn
