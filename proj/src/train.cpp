#include "spannorm/train.hpp"

#include <cmath>
#include <limits>

namespace spannorm {

double RunLog::final_smoothed() const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (std::isfinite(it->smoothed)) return it->smoothed;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

TrainResult train(const TrainConfig& config, const StepObserver& observer) {
  config.validate();
  const TaskSource source(config.task, config.model.vocab, config.model.seq);
  TrainResult result;
  result.checkpoint.config = config;
  result.checkpoint.rng.seed = config.seed;
  ModelParams& params = result.checkpoint.params;
  params = init_model(config.model);
  OptimizerState state = OptimizerState::zeros_for(params);
  const AdamWConfig adam{config.beta1, config.beta2, config.adam_eps, config.weight_decay,
                         config.clip_norm};
  const int trace_every = config.trace_every > 0 ? config.trace_every : config.log_every;

  RunLog& log = result.log;
  double smoothed = 0.0;
  for (int step = 1; step <= config.total_steps; ++step) {
    const Batch batch = source.batch(config.seed, static_cast<std::uint64_t>(step - 1),
                                     config.batch_tokens);
    const ModelOutput fwd = model_forward(config.model, params, batch.tokens);
    const LossOutput loss = cross_entropy(fwd.logits, batch.targets);
    result.checkpoint.rng.next_index = static_cast<std::uint64_t>(step);

    RunLogRow row;
    row.step = step;
    row.loss = loss.loss;
    row.lr = lr_at(step, config);
    if (!std::isfinite(loss.loss)) {
      row.smoothed = std::numeric_limits<double>::quiet_NaN();
      row.grad_norm = std::numeric_limits<double>::quiet_NaN();
      log.rows.push_back(row);
      log.diverged = true;
      log.divergence_step = step;
      if (observer) observer(row);
      break;
    }
    const ModelGradients grads = model_backward(config.model, params, fwd.cache, loss.grad_logits);
    if (step == 1 || step % trace_every == 0 || step == config.total_steps) {
      log.traces.push_back({step, make_trace(fwd.cache, grads, loss.loss)});
    }
    const StepReport report = adamw_step(params, grads.params, state, row.lr, adam);
    row.grad_norm = report.grad_norm;
    row.skipped = !report.applied;
    smoothed = step == 1 ? loss.loss : kLossSmoothing * smoothed + (1.0 - kLossSmoothing) * loss.loss;
    row.smoothed = smoothed;
    log.rows.push_back(row);
    result.checkpoint.step = static_cast<std::uint64_t>(step);
    if (observer) observer(row);
  }
  return result;
}

Evaluation evaluate(const TrainConfig& config, const ModelParams& params, std::uint64_t index) {
  const TaskSource source(config.task, config.model.vocab, config.model.seq);
  const Batch batch = source.batch(config.seed, index, config.batch_tokens);
  Evaluation ev;
  ModelOutput fwd = model_forward(config.model, params, batch.tokens);
  const LossOutput loss = cross_entropy(fwd.logits, batch.targets);
  ev.loss = loss.loss;
  if (std::isfinite(loss.loss)) {
    ev.grads = model_backward(config.model, params, fwd.cache, loss.grad_logits);
  }
  ev.cache = std::move(fwd.cache);
  return ev;
}

}  // namespace spannorm
