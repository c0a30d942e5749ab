#include "spannorm/layers.hpp"

namespace spannorm {

BlockContext BlockContext::from_config(const ModelConfig& config, Index seq_len) {
  BlockContext ctx;
  ctx.heads = config.heads;
  ctx.seq_len = seq_len;
  ctx.activation = config.activation;
  ctx.eps = config.ln_eps;
  return ctx;
}

}  // namespace spannorm
