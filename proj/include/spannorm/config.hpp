#pragma once

#include <cstdint>
#include <string>

#include "spannorm/init.hpp"

namespace spannorm {

enum class TopologyKind { PostNorm, PreNorm, SpanNorm, HybridNorm, MixLN, PeriLN, LNScaling };

inline constexpr TopologyKind kAllTopologies[] = {
    TopologyKind::PostNorm,   TopologyKind::PreNorm, TopologyKind::SpanNorm,
    TopologyKind::HybridNorm, TopologyKind::MixLN,   TopologyKind::PeriLN,
    TopologyKind::LNScaling};

struct NormTopology {
  TopologyKind kind = TopologyKind::SpanNorm;
  // Mix-LN only: fraction of the stack (from the bottom) wired as PostNorm.
  double post_fraction = 0.25;
};

const char* to_string(TopologyKind kind);
TopologyKind parse_topology(const std::string& text);

enum class Activation { Gelu, Identity };

struct ModelConfig {
  int layers = 12;
  int width = 128;
  int heads = 4;
  int ffn = 384;
  int vocab = 128;
  int seq = 64;
  NormTopology topology;
  InitStrategy init;  // depth is taken from `layers` when the model is built
  Activation activation = Activation::Gelu;
  double ln_eps = 1e-5;
  std::uint64_t seed = 0;

  int head_dim() const { return width / heads; }
  void validate() const;
};

/// How a single block is wired. Mix-LN resolves to Post or Pre per layer and
/// LayerNorm-Scaling is Pre with a 1/sqrt(l) factor on the sub-layer inputs.
enum class BlockWiring { Post, Pre, Span, Hybrid, Peri };

struct WiringInfo {
  BlockWiring wiring = BlockWiring::Span;
  bool first_layer_embed_norm = false;  // SpanNorm layer 1 normalizes E on the MHA path
  bool qkv_norm = false;
  double input_scale = 1.0;
};

const char* to_string(BlockWiring wiring);

/// Number of bottom layers that Mix-LN wires as PostNorm: ceil(alpha * L).
int mixln_post_layers(double post_fraction, int depth);

/// `layer` is 1-based.
WiringInfo wiring_for(const NormTopology& topology, int layer, int depth);

/// A final LN before the head is needed whenever the last block's output is
/// not itself a LayerNorm output.
bool needs_final_norm(const ModelConfig& config);

}  // namespace spannorm
