#pragma once

#include <functional>
#include <vector>

#include "spannorm/checkpoint.hpp"
#include "spannorm/dynamics.hpp"
#include "spannorm/optim.hpp"
#include "spannorm/train_config.hpp"

namespace spannorm {

struct RunLogRow {
  int step = 0;
  double loss = 0.0;
  double smoothed = 0.0;   // EMA with factor 0.99, started at the first loss
  double lr = 0.0;
  double grad_norm = 0.0;  // global norm before clipping
  bool skipped = false;    // gradients were not finite; no update applied
};

struct TraceSnapshot {
  int step = 0;
  PropagationTrace trace;
};

struct RunLog {
  std::vector<RunLogRow> rows;  // one per step
  std::vector<TraceSnapshot> traces;
  bool diverged = false;
  int divergence_step = 0;

  /// Smoothed loss of the last finite step (NaN if there is none).
  double final_smoothed() const;
};

struct TrainResult {
  RunLog log;
  Checkpoint checkpoint;
};

inline constexpr double kLossSmoothing = 0.99;

using StepObserver = std::function<void(const RunLogRow&)>;

/// Deterministic AdamW training on the configured task. Traces are taken from
/// the training pass at step 1, every `trace_every` steps and at the last
/// step. A non-finite loss halts the run and marks the divergence step.
TrainResult train(const TrainConfig& config, const StepObserver& observer = {});

/// Forward + backward on one batch of the configured task without updating.
struct Evaluation {
  double loss = 0.0;
  ModelGradients grads;
  ModelCache cache;
};
Evaluation evaluate(const TrainConfig& config, const ModelParams& params, std::uint64_t index);

}  // namespace spannorm
