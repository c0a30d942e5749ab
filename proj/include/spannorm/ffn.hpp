#pragma once

#include "spannorm/layers.hpp"

namespace spannorm {

template <typename Scalar>
struct BasicFfnCache {
  MatrixX<Scalar> pre;  // y * W_1
  MatrixX<Scalar> act;    // activation(pre)
  MatrixX<Scalar> slope;  // activation'(pre); empty for the identity
};

using FfnCache = BasicFfnCache<double>;

// act(y * W_1) * W_2, no biases.
template <typename Scalar>
MatrixX<Scalar> ffn_forward(const BasicBlockParams<Scalar>& params, const MatrixX<Scalar>& y,
                            Activation activation, BasicFfnCache<Scalar>& cache);

template <typename Scalar>
MatrixX<Scalar> ffn_backward(const BasicBlockParams<Scalar>& params, const MatrixX<Scalar>& y,
                             const BasicFfnCache<Scalar>& cache, const MatrixX<Scalar>& grad_out,
                             Activation activation, BasicBlockParams<Scalar>& grads);

}  // namespace spannorm
