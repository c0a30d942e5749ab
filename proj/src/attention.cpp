#include "spannorm/attention.hpp"

#include <cmath>
#include <limits>

namespace spannorm {

namespace {

// Views an N x d matrix as (N * heads) x head_dim so a LayerNorm over the
// last axis normalizes each head separately.
template <typename Scalar>
Eigen::Map<const MatrixX<Scalar>> by_head(const MatrixX<Scalar>& m, int heads) {
  return Eigen::Map<const MatrixX<Scalar>>(m.data(), m.rows() * heads, m.cols() / heads);
}

template <typename Scalar>
MatrixX<Scalar> head_norm_forward(const BasicNormParams<Scalar>& norm, const MatrixX<Scalar>& raw,
                                  int heads, double eps, LayerNormStats<Scalar>& stats) {
  auto [y, s] = layer_norm_forward(by_head(raw, heads), norm.gain, norm.bias, static_cast<Scalar>(eps));
  stats = std::move(s);
  return Eigen::Map<MatrixX<Scalar>>(y.data(), raw.rows(), raw.cols());
}

template <typename Scalar>
MatrixX<Scalar> head_norm_backward(const BasicNormParams<Scalar>& norm,
                                   const LayerNormStats<Scalar>& stats, const MatrixX<Scalar>& raw,
                                   const MatrixX<Scalar>& grad, int heads,
                                   BasicNormParams<Scalar>& norm_grad) {
  LayerNormGrads<Scalar> g =
      layer_norm_backward(by_head(grad, heads), stats, by_head(raw, heads), norm.gain);
  norm_grad.gain += g.gain;
  norm_grad.bias += g.bias;
  return Eigen::Map<MatrixX<Scalar>>(g.x.data(), raw.rows(), raw.cols());
}

template <typename Scalar>
void softmax_rows(MatrixX<Scalar>& scores, bool causal) {
  const Index t = scores.rows();
  for (Index i = 0; i < t; ++i) {
    const Index width = causal ? i + 1 : scores.cols();
    auto row = scores.row(i);
    const Scalar peak = row.head(width).maxCoeff();
    row.head(width) = (row.head(width).array() - peak).exp();
    row.head(width) /= row.head(width).sum();
    if (width < scores.cols()) row.tail(scores.cols() - width).setZero();
  }
}

template <typename Scalar>
void check_input(const MatrixX<Scalar>& x, const BlockContext& ctx, Index width) {
  if (x.cols() != width) {
    throw DimensionError("attention: input " + shape_string(x) + " but width " +
                         std::to_string(width));
  }
  if (ctx.seq_len < 1 || x.rows() % ctx.seq_len != 0) {
    throw ContractError("attention: " + std::to_string(x.rows()) +
                        " rows are not a whole number of sequences of length " +
                        std::to_string(ctx.seq_len));
  }
  if (width % ctx.heads != 0) throw ConfigError("attention: heads must divide width");
}

}  // namespace

template <typename Scalar>
MatrixX<Scalar> attention_forward(const BasicBlockParams<Scalar>& params, const MatrixX<Scalar>& x,
                                  const BlockContext& ctx, bool qkv_norm,
                                  BasicAttentionCache<Scalar>& cache) {
  check_input<Scalar>(x, ctx, params.wq.rows());
  const Index t = ctx.seq_len;
  const Index batch = x.rows() / t;
  const int heads = ctx.heads;
  const Index dh = x.cols() / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  if (qkv_norm) {
    cache.q_raw = x * params.wq;
    cache.k_raw = x * params.wk;
    cache.v_raw = x * params.wv;
    cache.q = head_norm_forward(params.ln_q, cache.q_raw, heads, ctx.eps, cache.q_stats);
    cache.k = head_norm_forward(params.ln_k, cache.k_raw, heads, ctx.eps, cache.k_stats);
    cache.v = head_norm_forward(params.ln_v, cache.v_raw, heads, ctx.eps, cache.v_stats);
  } else {
    cache.q = x * params.wq;
    cache.k = x * params.wk;
    cache.v = x * params.wv;
  }

  cache.context.resize(x.rows(), x.cols());
  cache.probs.assign(static_cast<std::size_t>(batch * heads), MatrixX<Scalar>());
  for (Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      MatrixX<Scalar>& p = cache.probs[static_cast<std::size_t>(b * heads + h)];
      p.noalias() = cache.q.block(b * t, h * dh, t, dh) * cache.k.block(b * t, h * dh, t, dh).transpose();
      p *= scale;
      softmax_rows(p, ctx.causal);
      cache.context.block(b * t, h * dh, t, dh).noalias() = p * cache.v.block(b * t, h * dh, t, dh);
    }
  }
  return cache.context * params.wo;
}

template <typename Scalar>
MatrixX<Scalar> attention_backward(const BasicBlockParams<Scalar>& params, const MatrixX<Scalar>& x,
                                   const BasicAttentionCache<Scalar>& cache,
                                   const MatrixX<Scalar>& grad_out, const BlockContext& ctx,
                                   bool qkv_norm, BasicBlockParams<Scalar>& grads) {
  if (grad_out.rows() != x.rows() || cache.context.rows() != x.rows() ||
      grad_out.cols() != params.wo.cols()) {
    throw ContractError("attention_backward: cache does not match input " + shape_string(x));
  }
  const Index t = ctx.seq_len;
  const Index batch = x.rows() / t;
  const int heads = ctx.heads;
  const Index dh = x.cols() / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  grads.wo.noalias() += cache.context.transpose() * grad_out;
  const MatrixX<Scalar> d_context = grad_out * params.wo.transpose();

  MatrixX<Scalar> dq(x.rows(), x.cols());
  MatrixX<Scalar> dk(x.rows(), x.cols());
  MatrixX<Scalar> dv(x.rows(), x.cols());
  MatrixX<Scalar> dp;
  for (Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const MatrixX<Scalar>& p = cache.probs[static_cast<std::size_t>(b * heads + h)];
      const auto d_o = d_context.block(b * t, h * dh, t, dh);
      dp.noalias() = d_o * cache.v.block(b * t, h * dh, t, dh).transpose();
      dv.block(b * t, h * dh, t, dh).noalias() = p.transpose() * d_o;
      // softmax backward: dS = P * (dP - rowsum(P * dP))
      const VectorX<Scalar> row_dot = (p.array() * dp.array()).rowwise().sum();
      dp = (p.array() * (dp.array().colwise() - row_dot.array())) * scale;
      dq.block(b * t, h * dh, t, dh).noalias() = dp * cache.k.block(b * t, h * dh, t, dh);
      dk.block(b * t, h * dh, t, dh).noalias() = dp.transpose() * cache.q.block(b * t, h * dh, t, dh);
    }
  }

  if (qkv_norm) {
    dq = head_norm_backward(params.ln_q, cache.q_stats, cache.q_raw, dq, heads, grads.ln_q);
    dk = head_norm_backward(params.ln_k, cache.k_stats, cache.k_raw, dk, heads, grads.ln_k);
    dv = head_norm_backward(params.ln_v, cache.v_stats, cache.v_raw, dv, heads, grads.ln_v);
  }

  grads.wq.noalias() += x.transpose() * dq;
  grads.wk.noalias() += x.transpose() * dk;
  grads.wv.noalias() += x.transpose() * dv;
  MatrixX<Scalar> dx = dq * params.wq.transpose();
  dx.noalias() += dk * params.wk.transpose();
  dx.noalias() += dv * params.wv.transpose();
  return dx;
}

#define SPANNORM_INSTANTIATE(S)                                                              \
  template MatrixX<S> attention_forward(const BasicBlockParams<S>&, const MatrixX<S>&,        \
                                        const BlockContext&, bool, BasicAttentionCache<S>&);  \
  template MatrixX<S> attention_backward(const BasicBlockParams<S>&, const MatrixX<S>&,       \
                                         const BasicAttentionCache<S>&, const MatrixX<S>&,    \
                                         const BlockContext&, bool, BasicBlockParams<S>&);
SPANNORM_INSTANTIATE(double)
SPANNORM_INSTANTIATE(long double)
#undef SPANNORM_INSTANTIATE

}  // namespace spannorm
