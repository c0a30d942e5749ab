#pragma once

#include "spannorm/config.hpp"
#include "spannorm/params.hpp"
#include "spannorm/tensor.hpp"

namespace spannorm {

/// Shape information shared by the sub-layers of one forward pass. Inputs are
/// stacked sequences: (batch * seq_len) x d, rows of a sequence contiguous.
struct BlockContext {
  int heads = 1;
  Index seq_len = 1;
  Activation activation = Activation::Gelu;
  double eps = 1e-5;
  bool causal = true;

  static BlockContext from_config(const ModelConfig& config, Index seq_len);
};

template <typename Scalar>
using BasicNormStats = LayerNormStats<Scalar>;
using NormStats = BasicNormStats<double>;

template <typename Scalar>
MatrixX<Scalar> norm_forward(const BasicNormParams<Scalar>& norm, const MatrixX<Scalar>& x,
                             double eps, LayerNormStats<Scalar>& stats) {
  auto [y, s] = layer_norm_forward(x, norm.gain, norm.bias, static_cast<Scalar>(eps));
  stats = std::move(s);
  return std::move(y);
}

/// Backward through `norm`; gain/bias gradients are accumulated into `grad`.
template <typename Scalar>
MatrixX<Scalar> norm_backward(const BasicNormParams<Scalar>& norm,
                              const LayerNormStats<Scalar>& stats, const MatrixX<Scalar>& x,
                              const MatrixX<Scalar>& grad_y, BasicNormParams<Scalar>& grad) {
  LayerNormGrads<Scalar> g = layer_norm_backward(grad_y, stats, x, norm.gain);
  grad.gain += g.gain;
  grad.bias += g.bias;
  return std::move(g.x);
}

}  // namespace spannorm
