#pragma once

#include <cstdint>

#include "spannorm/config.hpp"
#include "spannorm/kv_config.hpp"
#include "spannorm/tasks.hpp"

namespace spannorm {

struct TrainConfig {
  ModelConfig model;
  double peak_lr = 1e-3;
  double min_lr = 1e-4;
  int warmup_steps = 100;
  int total_steps = 1000;
  int batch_tokens = 256;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double clip_norm = 1.0;  // <= 0 or infinite disables clipping
  double adam_eps = 1e-8;
  TaskSpec task;
  std::uint64_t seed = 0;  // data stream; the model is seeded by model.seed
  int log_every = 50;
  int trace_every = 0;     // 0: same as log_every

  void validate() const;
};

/// Linear warmup from 0 to peak over `warmup_steps`, then a half cosine from
/// peak to min over the remaining steps.
double lr_at(int step, const TrainConfig& config);

/// Reads [model] and [train] sections over `defaults`; unknown keys are errors.
TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig defaults = {});
KeyValueConfig to_key_values(const TrainConfig& config);

}  // namespace spannorm
