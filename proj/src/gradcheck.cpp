#include "spannorm/gradcheck.hpp"

#include <algorithm>
#include <utility>

namespace spannorm {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::pair<TokenMatrix, TokenMatrix> random_token_batch(int vocab, Index batch, Index seq_len,
                                                       std::uint64_t seed) {
  SeededRng rng(seed, /*stream=*/1);
  TokenMatrix tokens(batch, seq_len);
  TokenMatrix targets(batch, seq_len);
  const auto v = static_cast<std::uint64_t>(vocab);
  for (Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = static_cast<int>(rng.below(v));
  for (Index i = 0; i < targets.size(); ++i) targets.data()[i] = static_cast<int>(rng.below(v));
  return {tokens, targets};
}

GradCheckReport check_model(const ModelConfig& config, double tolerance,
                            const GradCheckOptions& options) {
  const ModelParams params = init_model(config);
  if (parameter_count(params) >= 100000) {
    throw ContractError("check_model: configuration too large for full finite differences");
  }
  const auto [tokens, targets] =
      random_token_batch(config.vocab, options.batch, options.seq_len, options.data_seed);

  const ModelOutput fwd = model_forward(config, params, tokens);
  const LossOutput loss = cross_entropy(fwd.logits, targets);
  ModelGradients grads = model_backward(config, params, fwd.cache, loss.grad_logits);
  if (options.corrupt_gradients) options.corrupt_gradients(grads.params);
  const Vector analytic = flatten(grads.params);

  Vector numeric;
  if (options.oracle == OraclePrecision::Extended) {
    using Wide = long double;
    const auto wide = cast_params<Wide>(params);
    numeric = finite_diff<Wide>(model_loss_function(config, wide, tokens, targets), flatten(wide),
                                static_cast<Wide>(options.step))
                  .cast<double>();
  } else {
    numeric = finite_diff<double>(model_loss_function(config, params, tokens, targets),
                                  flatten(params), options.step);
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  Index offset = 0;
  for (const auto& view : param_views(std::as_const(grads.params))) {
    GroupError group;
    group.name = view.name;
    for (Index i = 0; i < view.size; ++i) {
      const double a = analytic(offset + i);
      const double n = numeric(offset + i);
      const double rel = relative_error(a, n);
      group.max_absolute = std::max(group.max_absolute, std::abs(a - n));
      if (rel > group.max_relative || group.worst_index < 0) {
        group.max_relative = rel;
        group.worst_index = i;
      }
    }
    group.pass = group.max_relative < tolerance;
    report.max_relative = std::max(report.max_relative, group.max_relative);
    report.pass = report.pass && group.pass;
    report.groups.push_back(std::move(group));
    offset += view.size;
  }
  return report;
}

}  // namespace spannorm
