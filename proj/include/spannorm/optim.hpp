#pragma once

#include "spannorm/params.hpp"

namespace spannorm {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double clip_norm = 1.0;  // <= 0 or infinite disables clipping
};

struct OptimizerState {
  ModelParams m;
  ModelParams v;
  long step = 0;

  static OptimizerState zeros_for(const ModelParams& params);
};

struct StepReport {
  double grad_norm = 0.0;  // global norm before clipping
  double clip_scale = 1.0;
  bool applied = false;    // false when the gradients were not finite
};

/// Decoupled AdamW with global-norm clipping ahead of the moment update.
/// Weight decay applies to weight matrices only; norm gains/biases and the
/// embeddings are exempt. Non-finite gradients leave params and state untouched.
StepReport adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                      double lr, const AdamWConfig& config);

}  // namespace spannorm
