#include "spannorm/config.hpp"

#include <cmath>

namespace spannorm {

const char* to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::PostNorm: return "postnorm";
    case TopologyKind::PreNorm: return "prenorm";
    case TopologyKind::SpanNorm: return "spannorm";
    case TopologyKind::HybridNorm: return "hybridnorm";
    case TopologyKind::MixLN: return "mixln";
    case TopologyKind::PeriLN: return "periln";
    case TopologyKind::LNScaling: return "lnscaling";
  }
  throw ConfigError("unknown topology");
}

TopologyKind parse_topology(const std::string& text) {
  for (TopologyKind kind : kAllTopologies) {
    if (text == to_string(kind)) return kind;
  }
  throw ConfigError("unknown topology '" + text + "'");
}

const char* to_string(BlockWiring wiring) {
  switch (wiring) {
    case BlockWiring::Post: return "post";
    case BlockWiring::Pre: return "pre";
    case BlockWiring::Span: return "span";
    case BlockWiring::Hybrid: return "hybrid";
    case BlockWiring::Peri: return "peri";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model: layers must be >= 1");
  if (width < 1 || heads < 1) throw ConfigError("model: width and heads must be positive");
  if (width % heads != 0) throw ConfigError("model: heads must divide width");
  if (ffn < width) throw ConfigError("model: ffn width must be >= hidden width");
  if (vocab < 2) throw ConfigError("model: vocab must be >= 2");
  if (seq < 1) throw ConfigError("model: seq must be >= 1");
  if (!(ln_eps >= 0.0)) throw ConfigError("model: ln_eps must be non-negative");
  if (!(init.base_std > 0.0)) throw ConfigError("model: init base_std must be positive");
  if (topology.kind == TopologyKind::MixLN &&
      !(topology.post_fraction >= 0.0 && topology.post_fraction <= 1.0)) {
    throw ConfigError("model: mixln post_fraction must lie in [0, 1]");
  }
}

int mixln_post_layers(double post_fraction, int depth) {
  // The small slack keeps e.g. 0.25 * 8 from rounding up to 3.
  return static_cast<int>(std::ceil(post_fraction * depth - 1e-9));
}

WiringInfo wiring_for(const NormTopology& topology, int layer, int depth) {
  if (layer < 1 || layer > depth) {
    throw ContractError("wiring_for: layer " + std::to_string(layer) + " outside [1, " +
                        std::to_string(depth) + "]");
  }
  WiringInfo info;
  switch (topology.kind) {
    case TopologyKind::PostNorm: info.wiring = BlockWiring::Post; break;
    case TopologyKind::PreNorm: info.wiring = BlockWiring::Pre; break;
    case TopologyKind::SpanNorm:
      info.wiring = BlockWiring::Span;
      info.first_layer_embed_norm = layer == 1;
      break;
    case TopologyKind::HybridNorm:
      info.wiring = BlockWiring::Hybrid;
      info.qkv_norm = true;
      break;
    case TopologyKind::MixLN:
      info.wiring = (layer - 1) < mixln_post_layers(topology.post_fraction, depth)
                        ? BlockWiring::Post
                        : BlockWiring::Pre;
      break;
    case TopologyKind::PeriLN: info.wiring = BlockWiring::Peri; break;
    case TopologyKind::LNScaling:
      info.wiring = BlockWiring::Pre;
      info.input_scale = 1.0 / std::sqrt(static_cast<double>(layer));
      break;
  }
  return info;
}

bool needs_final_norm(const ModelConfig& config) {
  const WiringInfo last = wiring_for(config.topology, config.layers, config.layers);
  return last.wiring == BlockWiring::Pre || last.wiring == BlockWiring::Peri ||
         last.wiring == BlockWiring::Hybrid;
}

}  // namespace spannorm
