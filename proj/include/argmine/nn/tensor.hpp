#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace argmine::nn {

// Row-major so that rows are sequence positions and a row slice is contiguous.
template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Rng = std::mt19937_64;

/// A trainable tensor. Vectors are stored as 1 x n matrices.
template <class T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool decay = true;  // excluded from weight decay when false (biases, norms)

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols, bool decays = true)
      : name(std::move(n)), value(Matrix<T>::Zero(rows, cols)), grad(Matrix<T>::Zero(rows, cols)), decay(decays) {}

  void zero_grad() { grad.setZero(); }
};

template <class T>
using ParamList = std::vector<Param<T>*>;

template <class T>
void zero_grad(const ParamList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

template <class T>
void init_normal(Param<T>& p, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = T(dist(rng));
}

// Glorot uniform over a (fan_out x fan_in) weight.
template <class T>
void init_xavier(Param<T>& p, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(p.value.rows() + p.value.cols()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = T(dist(rng));
}

template <class T>
double global_grad_norm(const ParamList<T>& params) {
  double sq = 0.0;
  for (const auto* p : params) sq += double(p->grad.squaredNorm());
  return std::sqrt(sq);
}

// Rescales gradients so their global L2 norm is at most max_norm.
template <class T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = T(max_norm / (norm + 1e-6));
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

template <class T>
std::vector<Matrix<T>> snapshot(const ParamList<T>& params) {
  std::vector<Matrix<T>> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

template <class T>
void restore(const ParamList<T>& params, const std::vector<Matrix<T>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace argmine::nn
