#pragma once

#include <vector>

#include "spannorm/layers.hpp"

namespace spannorm {

template <typename Scalar>
struct BasicAttentionCache {
  MatrixX<Scalar> q, k, v;                      // projections after the optional QKV-Norm
  MatrixX<Scalar> q_raw, k_raw, v_raw;          // before QKV-Norm (HybridNorm only)
  LayerNormStats<Scalar> q_stats, k_stats, v_stats;  // over (rows * heads) x head_dim
  std::vector<MatrixX<Scalar>> probs;           // softmax weights, one t x t per (sequence, head)
  MatrixX<Scalar> context;                      // concatenated head outputs before W_O
};

using AttentionCache = BasicAttentionCache<double>;

/// Multi-head scaled dot-product attention followed by W_O. With `qkv_norm`
/// each head's q, k, v is layer-normalized over the head dimension using
/// ln_q / ln_k / ln_v (gains shared across heads).
template <typename Scalar>
MatrixX<Scalar> attention_forward(const BasicBlockParams<Scalar>& params, const MatrixX<Scalar>& x,
                                  const BlockContext& ctx, bool qkv_norm,
                                  BasicAttentionCache<Scalar>& cache);

template <typename Scalar>
MatrixX<Scalar> attention_backward(const BasicBlockParams<Scalar>& params, const MatrixX<Scalar>& x,
                                   const BasicAttentionCache<Scalar>& cache,
                                   const MatrixX<Scalar>& grad_out, const BlockContext& ctx,
                                   bool qkv_norm, BasicBlockParams<Scalar>& grads);

}  // namespace spannorm
