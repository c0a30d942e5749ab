#include "spannorm/params.hpp"

namespace spannorm {

ModelParams init_model(const ModelConfig& config) {
  config.validate();
  const Index d = config.width;
  const Index f = config.ffn;
  const Index dh = config.head_dim();
  InitStrategy strategy = config.init;
  strategy.depth = config.layers;

  SeededRng rng(config.seed, /*stream=*/0);
  ModelParams p;
  p.tok_emb = init_matrix(config.vocab, d, strategy, InitRole::Standard, rng);
  p.pos_emb = init_matrix(config.seq, d, strategy, InitRole::Standard, rng);
  p.blocks.resize(config.layers);
  for (int l = 1; l <= config.layers; ++l) {
    BlockParams& b = p.blocks[l - 1];
    const WiringInfo info = wiring_for(config.topology, l, config.layers);
    b.wq = init_matrix(d, d, strategy, InitRole::Standard, rng);
    b.wk = init_matrix(d, d, strategy, InitRole::Standard, rng);
    b.wv = init_matrix(d, d, strategy, InitRole::Standard, rng);
    b.wo = init_matrix(d, d, strategy, InitRole::ScaledOutput, rng);
    b.w1 = init_matrix(d, f, strategy, InitRole::Standard, rng);
    b.w2 = init_matrix(f, d, strategy, InitRole::ScaledOutput, rng);
    b.ln1 = NormParams::unit(d);
    b.ln2 = NormParams::unit(d);
    if (info.first_layer_embed_norm) b.ln_embed = NormParams::unit(d);
    if (info.qkv_norm) {
      b.ln_q = NormParams::unit(dh);
      b.ln_k = NormParams::unit(dh);
      b.ln_v = NormParams::unit(dh);
    }
    if (info.wiring == BlockWiring::Peri) {
      b.ln_attn_out = NormParams::unit(d);
      b.ln_ffn_out = NormParams::unit(d);
    }
  }
  if (needs_final_norm(config)) p.final_ln = NormParams::unit(d);
  return p;
}

double squared_norm(const ModelParams& params) {
  double s = 0.0;
  for (const auto& v : param_views(params)) {
    s += Eigen::Map<const Vector>(v.data, v.size).squaredNorm();
  }
  return s;
}

}  // namespace spannorm
