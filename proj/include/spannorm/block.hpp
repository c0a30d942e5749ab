#pragma once

#include "spannorm/attention.hpp"
#include "spannorm/ffn.hpp"

namespace spannorm {

/// Activations of one block. `attn_sum` is A_l (the sum entering the first
/// residual's norm or, for pre-style wiring, the mid-block residual stream) and
/// `ffn_sum` is Z_l. `mid` is Y_l, the input of the FFN sub-layer's residual.
template <typename Scalar>
struct BasicBlockCache {
  WiringInfo info;
  MatrixX<Scalar> input;       // X'_l
  MatrixX<Scalar> attn_input;  // normalized MHA input when the wiring normalizes it
  MatrixX<Scalar> attn_raw;    // MHA output before its output norm (Peri-LN)
  MatrixX<Scalar> attn_sum;    // A_l
  MatrixX<Scalar> mid;         // Y_l
  MatrixX<Scalar> ffn_input;   // normalized FFN input when the wiring normalizes it
  MatrixX<Scalar> ffn_raw;     // FFN output before its output norm (Peri-LN)
  MatrixX<Scalar> ffn_branch;  // what the FFN sub-layer adds to its residual
  MatrixX<Scalar> ffn_sum;     // Z_l
  MatrixX<Scalar> output;      // X'_{l+1}
  LayerNormStats<Scalar> s_embed, s_attn_in, s1, s2, s_attn_out, s_ffn_out;
  BasicAttentionCache<Scalar> attn;
  BasicFfnCache<Scalar> ffn;
};

using BlockCache = BasicBlockCache<double>;

template <typename Scalar>
MatrixX<Scalar> block_forward(const WiringInfo& info, const BasicBlockParams<Scalar>& params,
                              const MatrixX<Scalar>& x, const BlockContext& ctx,
                              BasicBlockCache<Scalar>& cache);

/// Dispatches on the topology; `layer` is 1-based and must lie in [1, depth].
template <typename Scalar>
MatrixX<Scalar> block_forward(const NormTopology& topology, const BasicBlockParams<Scalar>& params,
                              const MatrixX<Scalar>& x, int layer, int depth,
                              const BlockContext& ctx, BasicBlockCache<Scalar>& cache) {
  return block_forward(wiring_for(topology, layer, depth), params, x, ctx, cache);
}

/// SpanNorm layer 1: Y_1 = LN(MHA(LN(E)) + E), X'_2 = LN(FFN(Y_1) + E). The
/// extra LN sits on the MHA input only; the residual carries raw E. Requires
/// the layer-1 `ln_embed` parameters.
template <typename Scalar>
MatrixX<Scalar> first_layer_forward_spannorm(const BasicBlockParams<Scalar>& params,
                                             const MatrixX<Scalar>& embeddings,
                                             const BlockContext& ctx,
                                             BasicBlockCache<Scalar>& cache) {
  if (params.ln_embed.empty()) {
    throw ContractError("first_layer_forward_spannorm: only valid for layer 1 (no ln_embed)");
  }
  WiringInfo info;
  info.wiring = BlockWiring::Span;
  info.first_layer_embed_norm = true;
  return block_forward(info, params, embeddings, ctx, cache);
}

/// Returns dLoss/dX'_l and accumulates parameter gradients into `grads`.
template <typename Scalar>
MatrixX<Scalar> block_backward(const BasicBlockParams<Scalar>& params,
                               const BasicBlockCache<Scalar>& cache,
                               const MatrixX<Scalar>& grad_out, const BlockContext& ctx,
                               BasicBlockParams<Scalar>& grads);

}  // namespace spannorm
