#include "spannorm/ffn.hpp"

#include <cmath>
#include <numbers>

namespace spannorm {

template <typename Scalar>
MatrixX<Scalar> ffn_forward(const BasicBlockParams<Scalar>& params, const MatrixX<Scalar>& y,
                            Activation activation, BasicFfnCache<Scalar>& cache) {
  if (y.cols() != params.w1.rows()) {
    throw DimensionError("ffn: input " + shape_string(y) + " vs W_1 " + shape_string(params.w1));
  }
  cache.pre.noalias() = y * params.w1;
  if (activation == Activation::Gelu) {
    using std::erf;
    using std::exp;
    constexpr Scalar inv_sqrt2 = Scalar(1) / std::numbers::sqrt2_v<Scalar>;
    constexpr Scalar inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<Scalar> * inv_sqrt2;
    cache.act.resize(cache.pre.rows(), cache.pre.cols());
    cache.slope.resize(cache.pre.rows(), cache.pre.cols());
    const Scalar* pre = cache.pre.data();
    Scalar* act = cache.act.data();
    Scalar* slope = cache.slope.data();
    for (Index i = 0; i < cache.pre.size(); ++i) {
      const Scalar v = pre[i];
      const Scalar cdf = Scalar(0.5) * (Scalar(1) + erf(v * inv_sqrt2));
      act[i] = v * cdf;
      slope[i] = cdf + v * inv_sqrt_2pi * exp(Scalar(-0.5) * v * v);
    }
  } else {
    cache.act = cache.pre;
    cache.slope.resize(0, 0);
  }
  return cache.act * params.w2;
}

template <typename Scalar>
MatrixX<Scalar> ffn_backward(const BasicBlockParams<Scalar>& params, const MatrixX<Scalar>& y,
                             const BasicFfnCache<Scalar>& cache, const MatrixX<Scalar>& grad_out,
                             Activation activation, BasicBlockParams<Scalar>& grads) {
  if (cache.act.rows() != y.rows() || grad_out.rows() != y.rows()) {
    throw ContractError("ffn_backward: cache does not match input " + shape_string(y));
  }
  grads.w2.noalias() += cache.act.transpose() * grad_out;
  MatrixX<Scalar> d_pre = grad_out * params.w2.transpose();
  if (activation == Activation::Gelu) {
    d_pre.array() *= cache.slope.array();
  }
  grads.w1.noalias() += y.transpose() * d_pre;
  return d_pre * params.w1.transpose();
}

#define SPANNORM_INSTANTIATE(S)                                                                  \
  template MatrixX<S> ffn_forward(const BasicBlockParams<S>&, const MatrixX<S>&, Activation,      \
                                  BasicFfnCache<S>&);                                             \
  template MatrixX<S> ffn_backward(const BasicBlockParams<S>&, const MatrixX<S>&,                 \
                                   const BasicFfnCache<S>&, const MatrixX<S>&, Activation,        \
                                   BasicBlockParams<S>&);
SPANNORM_INSTANTIATE(double)
SPANNORM_INSTANTIATE(long double)
#undef SPANNORM_INSTANTIATE

}  // namespace spannorm
