#include "spannorm/experiments.hpp"

#include <cmath>
#include <limits>

namespace spannorm {

std::vector<DepthStressRow> depth_stress(const TrainConfig& base, const std::vector<int>& depths,
                                         const StepObserver& observer) {
  std::vector<DepthStressRow> rows;
  for (const int depth : depths) {
    TrainConfig config = base;
    config.model.layers = depth;
    const TrainResult run = train(config, observer);
    DepthStressRow row;
    row.depth = depth;
    row.final_smoothed = run.log.final_smoothed();
    row.final_loss = run.log.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : run.log.rows.back().loss;
    row.diverged = run.log.diverged;
    row.divergence_step = run.log.divergence_step;
    rows.push_back(row);
  }
  return rows;
}

bool strictly_improves_with_depth(const std::vector<DepthStressRow>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].diverged || !std::isfinite(rows[i].final_smoothed)) return false;
    if (i > 0 && !(rows[i].final_smoothed < rows[i - 1].final_smoothed)) return false;
  }
  return true;
}

std::vector<GradProfile> lr_sweep_gradprofile(const TrainConfig& base,
                                              const std::vector<double>& lrs,
                                              const StepObserver& observer) {
  std::vector<GradProfile> out;
  for (const double lr : lrs) {
    TrainConfig config = base;
    config.min_lr = base.min_lr * lr / base.peak_lr;
    config.peak_lr = lr;
    const TrainResult run = train(config, observer);
    GradProfile profile;
    profile.lr = lr;
    profile.diverged = run.log.diverged;
    profile.divergence_step = run.log.divergence_step;
    profile.final_smoothed = run.log.final_smoothed();
    const Evaluation ev = evaluate(config, run.checkpoint.params, kHeldOutBatch);
    for (int l = 0; l < config.model.layers; ++l) {
      profile.gnorm_w2.push_back(std::isfinite(ev.loss)
                                     ? ev.grads.params.blocks[l].w2.norm()
                                     : std::numeric_limits<double>::quiet_NaN());
    }
    out.push_back(profile);
  }
  return out;
}

}  // namespace spannorm
