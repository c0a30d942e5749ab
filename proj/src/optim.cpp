#include "spannorm/optim.hpp"

#include <cmath>

#include "spannorm/errors.hpp"

namespace spannorm {

OptimizerState OptimizerState::zeros_for(const ModelParams& params) {
  return OptimizerState{zeros_like(params), zeros_like(params), 0};
}

StepReport adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                      double lr, const AdamWConfig& config) {
  auto p = param_views(params);
  const auto g = param_views(grads);
  auto m = param_views(state.m);
  auto v = param_views(state.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw DimensionError("adamw_step: parameter, gradient and state manifests differ");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i].size != p[i].size || m[i].size != p[i].size || v[i].size != p[i].size) {
      throw DimensionError("adamw_step: size mismatch for " + p[i].name);
    }
  }

  StepReport report;
  double sq = 0.0;
  for (const auto& view : g) {
    for (Index k = 0; k < view.size; ++k) sq += view.data[k] * view.data[k];
  }
  report.grad_norm = std::sqrt(sq);
  if (!std::isfinite(report.grad_norm)) return report;
  if (config.clip_norm > 0.0 && std::isfinite(config.clip_norm) &&
      report.grad_norm > config.clip_norm) {
    report.clip_scale = config.clip_norm / report.grad_norm;
  }

  state.step += 1;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool decay = p[i].kind == ParamKind::Weight;
    for (Index k = 0; k < p[i].size; ++k) {
      const double gk = g[i].data[k] * report.clip_scale;
      double& mk = m[i].data[k];
      double& vk = v[i].data[k];
      mk = config.beta1 * mk + (1.0 - config.beta1) * gk;
      vk = config.beta2 * vk + (1.0 - config.beta2) * gk * gk;
      double& theta = p[i].data[k];
      if (decay) theta -= lr * config.weight_decay * theta;
      theta -= lr * (mk / c1) / (std::sqrt(vk / c2) + config.eps);
    }
  }
  report.applied = true;
  return report;
}

}  // namespace spannorm
