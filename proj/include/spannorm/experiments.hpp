#pragma once

#include <vector>

#include "spannorm/train.hpp"

namespace spannorm {

struct DepthStressRow {
  int depth = 0;
  double final_smoothed = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
  int divergence_step = 0;
};

/// One train() per depth with every other setting (lr, data, seeds) shared.
std::vector<DepthStressRow> depth_stress(const TrainConfig& base, const std::vector<int>& depths,
                                         const StepObserver& observer = {});

/// True when no run diverged and final smoothed losses fall strictly with depth
/// (rows in the order given).
bool strictly_improves_with_depth(const std::vector<DepthStressRow>& rows);

struct GradProfile {
  double lr = 0.0;
  std::vector<double> gnorm_w2;  // per layer, on a held-out batch after training
  bool diverged = false;
  int divergence_step = 0;
  double final_smoothed = 0.0;
};

/// Trains `base` once per peak learning rate (min lr scaled alongside) and
/// measures ||dLoss/dW_2^(l)|| for every layer on a fixed held-out batch.
std::vector<GradProfile> lr_sweep_gradprofile(const TrainConfig& base,
                                              const std::vector<double>& lrs,
                                              const StepObserver& observer = {});

/// Batch index reserved for held-out measurements.
inline constexpr std::uint64_t kHeldOutBatch = 1ULL << 40;

}  // namespace spannorm
