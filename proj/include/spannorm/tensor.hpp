#pragma once

// Dense row-major tensors and the handful of kernels the transformer needs.
// Everything is templated on the Eigen expression type so the kernels work
// for any floating scalar; the model itself is instantiated with double.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "spannorm/errors.hpp"

namespace spannorm {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

/// Matrix product with an explicit shape check. Eigen's GEMM uses a fixed
/// blocking for a given build, so repeated calls are bit-identical.
template <typename A, typename B>
MatrixX<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a) + " * " +
                         shape_string(b));
  }
  return a * b;
}

/// Per-row statistics kept by layer_norm_forward.
template <typename Scalar>
struct LayerNormStats {
  VectorX<Scalar> mean;
  VectorX<Scalar> inv_std;
};

template <typename Scalar>
struct LayerNormGrads {
  MatrixX<Scalar> x;
  VectorX<Scalar> gain;
  VectorX<Scalar> bias;
};

/// Classic LayerNorm over the last axis with population variance:
///   y = gain * (x - mean) / sqrt(var + eps) + bias.
template <typename Derived>
std::pair<MatrixX<typename Derived::Scalar>, LayerNormStats<typename Derived::Scalar>>
layer_norm_forward(const Eigen::MatrixBase<Derived>& x, const VectorX<typename Derived::Scalar>& gain,
                   const VectorX<typename Derived::Scalar>& bias, typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  if (gain.size() != x.cols() || bias.size() != x.cols()) {
    throw DimensionError("layer_norm_forward: input " + shape_string(x) + " vs gain " +
                         std::to_string(gain.size()) + ", bias " + std::to_string(bias.size()));
  }
  if (!(eps >= Scalar(0))) throw ContractError("layer_norm_forward: eps must be non-negative");

  LayerNormStats<Scalar> stats;
  stats.mean = x.rowwise().mean();
  MatrixX<Scalar> centered = x.colwise() - stats.mean;
  const VectorX<Scalar> var = centered.array().square().rowwise().mean();
  stats.inv_std = (var.array() + eps).rsqrt();
  centered.array().colwise() *= stats.inv_std.array();
  centered.array().rowwise() *= gain.transpose().array();
  centered.rowwise() += bias.transpose();
  return {std::move(centered), std::move(stats)};
}

/// Exact gradients of layer_norm_forward given the upstream gradient.
template <typename DerivedG, typename DerivedX>
LayerNormGrads<typename DerivedX::Scalar> layer_norm_backward(
    const Eigen::MatrixBase<DerivedG>& grad_y, const LayerNormStats<typename DerivedX::Scalar>& stats,
    const Eigen::MatrixBase<DerivedX>& x, const VectorX<typename DerivedX::Scalar>& gain) {
  using Scalar = typename DerivedX::Scalar;
  if (grad_y.rows() != x.rows() || grad_y.cols() != x.cols() || stats.mean.size() != x.rows() ||
      stats.inv_std.size() != x.rows() || gain.size() != x.cols()) {
    throw ContractError("layer_norm_backward: cache/shape mismatch, grad " + shape_string(grad_y) +
                        " input " + shape_string(x));
  }
  MatrixX<Scalar> xhat = x.colwise() - stats.mean;
  xhat.array().colwise() *= stats.inv_std.array();

  LayerNormGrads<Scalar> out;
  out.bias = grad_y.colwise().sum().transpose();
  out.gain = (grad_y.array() * xhat.array()).colwise().sum().transpose();

  MatrixX<Scalar> g = grad_y;
  g.array().rowwise() *= gain.transpose().array();
  const VectorX<Scalar> mean_g = g.rowwise().mean();
  const VectorX<Scalar> mean_gx = (g.array() * xhat.array()).rowwise().mean();
  g.colwise() -= mean_g;
  g.array() -= xhat.array().colwise() * mean_gx.array();
  g.array().colwise() *= stats.inv_std.array();
  out.x = std::move(g);
  return out;
}

/// Per-row population variance averaged over rows (the statistic LayerNorm
/// normalizes).
template <typename Derived>
typename Derived::Scalar mean_token_variance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() == 0 || x.cols() == 0) return Scalar(0);
  const VectorX<Scalar> mean = x.rowwise().mean();
  return ((x.colwise() - mean).array().square().rowwise().mean()).mean();
}

template <typename Scalar>
Scalar gelu(Scalar v) {
  return Scalar(0.5) * v * (Scalar(1) + std::erf(v / std::numbers::sqrt2_v<Scalar>));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar v) {
  constexpr Scalar inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<Scalar> / std::numbers::sqrt2_v<Scalar>;
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v / std::numbers::sqrt2_v<Scalar>));
  return cdf + v * inv_sqrt_2pi * std::exp(Scalar(-0.5) * v * v);
}

}  // namespace spannorm
