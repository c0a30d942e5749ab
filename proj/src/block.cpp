#include "spannorm/block.hpp"

namespace spannorm {

namespace {

template <typename S>
MatrixX<S> forward_post_or_span(const WiringInfo& info, const BasicBlockParams<S>& p,
                                const MatrixX<S>& x, const BlockContext& ctx,
                                BasicBlockCache<S>& c) {
  const bool span = info.wiring == BlockWiring::Span;
  const MatrixX<S>* attn_in = &x;
  if (info.first_layer_embed_norm) {
    if (p.ln_embed.empty()) {
      throw ContractError("SpanNorm first-layer rule needs ln_embed (layer 1 parameters only)");
    }
    c.attn_input = norm_forward(p.ln_embed, x, ctx.eps, c.s_embed);
    attn_in = &c.attn_input;
  }
  c.attn_sum = x + attention_forward(p, *attn_in, ctx, false, c.attn);
  c.mid = norm_forward(p.ln1, c.attn_sum, ctx.eps, c.s1);
  c.ffn_branch = ffn_forward(p, c.mid, ctx.activation, c.ffn);
  c.ffn_sum = c.ffn_branch + (span ? x : c.mid);
  return norm_forward(p.ln2, c.ffn_sum, ctx.eps, c.s2);
}

template <typename S>
MatrixX<S> forward_pre(const WiringInfo& info, const BasicBlockParams<S>& p, const MatrixX<S>& x,
                       const BlockContext& ctx, BasicBlockCache<S>& c) {
  const S s = static_cast<S>(info.input_scale);
  c.attn_input = norm_forward(p.ln1, x, ctx.eps, c.s_attn_in);
  if (info.input_scale != 1.0) c.attn_input *= s;
  c.attn_sum = x + attention_forward(p, c.attn_input, ctx, false, c.attn);
  c.mid = c.attn_sum;
  c.ffn_input = norm_forward(p.ln2, c.attn_sum, ctx.eps, c.s2);
  if (info.input_scale != 1.0) c.ffn_input *= s;
  c.ffn_branch = ffn_forward(p, c.ffn_input, ctx.activation, c.ffn);
  c.ffn_sum = c.attn_sum + c.ffn_branch;
  return c.ffn_sum;
}

template <typename S>
MatrixX<S> forward_hybrid(const BasicBlockParams<S>& p, const MatrixX<S>& x,
                          const BlockContext& ctx, BasicBlockCache<S>& c) {
  c.attn_sum = x + attention_forward(p, x, ctx, true, c.attn);
  c.mid = norm_forward(p.ln1, c.attn_sum, ctx.eps, c.s1);
  c.ffn_input = norm_forward(p.ln2, c.mid, ctx.eps, c.s2);
  c.ffn_branch = ffn_forward(p, c.ffn_input, ctx.activation, c.ffn);
  c.ffn_sum = c.mid + c.ffn_branch;
  return c.ffn_sum;
}

template <typename S>
MatrixX<S> forward_peri(const BasicBlockParams<S>& p, const MatrixX<S>& x, const BlockContext& ctx,
                        BasicBlockCache<S>& c) {
  c.attn_input = norm_forward(p.ln1, x, ctx.eps, c.s_attn_in);
  c.attn_raw = attention_forward(p, c.attn_input, ctx, false, c.attn);
  c.attn_sum = x + norm_forward(p.ln_attn_out, c.attn_raw, ctx.eps, c.s_attn_out);
  c.mid = c.attn_sum;
  c.ffn_input = norm_forward(p.ln2, c.attn_sum, ctx.eps, c.s2);
  c.ffn_raw = ffn_forward(p, c.ffn_input, ctx.activation, c.ffn);
  c.ffn_branch = norm_forward(p.ln_ffn_out, c.ffn_raw, ctx.eps, c.s_ffn_out);
  c.ffn_sum = c.attn_sum + c.ffn_branch;
  return c.ffn_sum;
}

}  // namespace

template <typename Scalar>
MatrixX<Scalar> block_forward(const WiringInfo& info, const BasicBlockParams<Scalar>& params,
                              const MatrixX<Scalar>& x, const BlockContext& ctx,
                              BasicBlockCache<Scalar>& cache) {
  cache = BasicBlockCache<Scalar>{};
  cache.info = info;
  cache.input = x;
  switch (info.wiring) {
    case BlockWiring::Post:
    case BlockWiring::Span: cache.output = forward_post_or_span(info, params, x, ctx, cache); break;
    case BlockWiring::Pre: cache.output = forward_pre(info, params, x, ctx, cache); break;
    case BlockWiring::Hybrid: cache.output = forward_hybrid(params, x, ctx, cache); break;
    case BlockWiring::Peri: cache.output = forward_peri(params, x, ctx, cache); break;
    default: throw ConfigError("block_forward: unknown wiring");
  }
  return cache.output;
}

template <typename Scalar>
MatrixX<Scalar> block_backward(const BasicBlockParams<Scalar>& p, const BasicBlockCache<Scalar>& c,
                               const MatrixX<Scalar>& grad_out, const BlockContext& ctx,
                               BasicBlockParams<Scalar>& g) {
  using M = MatrixX<Scalar>;
  if (grad_out.rows() != c.output.rows() || grad_out.cols() != c.output.cols()) {
    throw ContractError("block_backward: gradient " + shape_string(grad_out) +
                        " does not match cached output " + shape_string(c.output));
  }
  const WiringInfo& info = c.info;
  const Activation act = ctx.activation;
  switch (info.wiring) {
    case BlockWiring::Post:
    case BlockWiring::Span: {
      const bool span = info.wiring == BlockWiring::Span;
      const M d_sum = norm_backward(p.ln2, c.s2, c.ffn_sum, grad_out, g.ln2);
      M d_mid = ffn_backward(p, c.mid, c.ffn, d_sum, act, g);
      if (!span) d_mid += d_sum;
      const M d_attn_sum = norm_backward(p.ln1, c.s1, c.attn_sum, d_mid, g.ln1);
      const M& attn_in = info.first_layer_embed_norm ? c.attn_input : c.input;
      M d_attn_in = attention_backward(p, attn_in, c.attn, d_attn_sum, ctx, false, g);
      if (info.first_layer_embed_norm) {
        d_attn_in = norm_backward(p.ln_embed, c.s_embed, c.input, d_attn_in, g.ln_embed);
      }
      M dx = d_attn_sum + d_attn_in;
      if (span) dx += d_sum;
      return dx;
    }
    case BlockWiring::Pre: {
      const Scalar s = static_cast<Scalar>(info.input_scale);
      M d_ffn_in = ffn_backward(p, c.ffn_input, c.ffn, grad_out, act, g);
      if (info.input_scale != 1.0) d_ffn_in *= s;
      const M d_attn_sum = grad_out + norm_backward(p.ln2, c.s2, c.attn_sum, d_ffn_in, g.ln2);
      M d_attn_in = attention_backward(p, c.attn_input, c.attn, d_attn_sum, ctx, false, g);
      if (info.input_scale != 1.0) d_attn_in *= s;
      return d_attn_sum + norm_backward(p.ln1, c.s_attn_in, c.input, d_attn_in, g.ln1);
    }
    case BlockWiring::Hybrid: {
      const M d_ffn_in = ffn_backward(p, c.ffn_input, c.ffn, grad_out, act, g);
      const M d_mid = grad_out + norm_backward(p.ln2, c.s2, c.mid, d_ffn_in, g.ln2);
      const M d_attn_sum = norm_backward(p.ln1, c.s1, c.attn_sum, d_mid, g.ln1);
      return d_attn_sum + attention_backward(p, c.input, c.attn, d_attn_sum, ctx, true, g);
    }
    case BlockWiring::Peri: {
      const M d_ffn_raw = norm_backward(p.ln_ffn_out, c.s_ffn_out, c.ffn_raw, grad_out, g.ln_ffn_out);
      const M d_ffn_in = ffn_backward(p, c.ffn_input, c.ffn, d_ffn_raw, act, g);
      const M d_attn_sum = grad_out + norm_backward(p.ln2, c.s2, c.attn_sum, d_ffn_in, g.ln2);
      const M d_attn_raw =
          norm_backward(p.ln_attn_out, c.s_attn_out, c.attn_raw, d_attn_sum, g.ln_attn_out);
      const M d_attn_in = attention_backward(p, c.attn_input, c.attn, d_attn_raw, ctx, false, g);
      return d_attn_sum + norm_backward(p.ln1, c.s_attn_in, c.input, d_attn_in, g.ln1);
    }
  }
  throw ConfigError("block_backward: unknown wiring");
}

#define SPANNORM_INSTANTIATE(S)                                                                 \
  template MatrixX<S> block_forward(const WiringInfo&, const BasicBlockParams<S>&,              \
                                    const MatrixX<S>&, const BlockContext&, BasicBlockCache<S>&); \
  template MatrixX<S> block_backward(const BasicBlockParams<S>&, const BasicBlockCache<S>&,     \
                                     const MatrixX<S>&, const BlockContext&, BasicBlockParams<S>&);
SPANNORM_INSTANTIATE(double)
SPANNORM_INSTANTIATE(long double)
#undef SPANNORM_INSTANTIATE

}  // namespace spannorm
