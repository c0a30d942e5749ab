#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "spannorm/model.hpp"

namespace spannorm {

template <typename Scalar>
using ScalarFunction = std::function<Scalar(const VectorX<Scalar>&)>;

namespace detail {

template <typename Scalar>
Scalar eval_finite(const ScalarFunction<Scalar>& f, const VectorX<Scalar>& theta, Index i) {
  const Scalar v = f(theta);
  if (!std::isfinite(v)) {
    throw NumericError("finite differences: non-finite objective at coordinate " +
                       std::to_string(i));
  }
  return v;
}

}  // namespace detail

/// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h for every
/// coordinate, each perturbed from the same base point. Throws NumericError if
/// f returns a non-finite value.
template <typename Scalar>
VectorX<Scalar> finite_diff(const ScalarFunction<Scalar>& f, const VectorX<Scalar>& theta,
                            Scalar step = Scalar(1e-5)) {
  if (!(step > 0)) throw ContractError("finite_diff: step must be positive");
  VectorX<Scalar> grad(theta.size());
  VectorX<Scalar> probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + step;
    const Scalar plus = detail::eval_finite(f, probe, i);
    probe(i) = theta(i) - step;
    const Scalar minus = detail::eval_finite(f, probe, i);
    probe(i) = theta(i);
    grad(i) = (plus - minus) / (2 * step);
  }
  return grad;
}

/// One-sided (f(theta + h e_i) - f(theta)) / h; a second, independent estimate
/// used to cross-check finite_diff.
template <typename Scalar>
VectorX<Scalar> forward_diff(const ScalarFunction<Scalar>& f, const VectorX<Scalar>& theta,
                             Scalar step = Scalar(1e-5)) {
  if (!(step > 0)) throw ContractError("forward_diff: step must be positive");
  const Scalar base = detail::eval_finite(f, theta, -1);
  VectorX<Scalar> grad(theta.size());
  VectorX<Scalar> probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + step;
    grad(i) = (detail::eval_finite(f, probe, i) - base) / step;
    probe(i) = theta(i);
  }
  return grad;
}

/// |a - b| / max(|a|, |b|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

struct GroupError {
  std::string name;
  double max_relative = 0.0;
  double max_absolute = 0.0;
  Index worst_index = -1;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GroupError> groups;
  double max_relative = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

enum class OraclePrecision { Double, Extended };

struct GradCheckOptions {
  double step = 1e-5;
  Index batch = 1;
  Index seq_len = 4;
  std::uint64_t data_seed = 7;
  // The analytic gradient is always 64-bit. The finite-difference oracle runs
  // in long double by default so its cancellation error (~ulp(loss) / h) sits
  // well below the 1e-8 relative-error floor.
  OraclePrecision oracle = OraclePrecision::Extended;
  // Mutation hook applied to the analytic gradients before comparison.
  std::function<void(ModelParams&)> corrupt_gradients;
};

/// Loss of the model on a fixed batch as a function of the flattened parameter
/// vector.
template <typename Scalar>
ScalarFunction<Scalar> model_loss_function(const ModelConfig& config,
                                           const BasicModelParams<Scalar>& params,
                                           const TokenMatrix& tokens, const TokenMatrix& targets) {
  return [config, scratch = params, tokens, targets](const VectorX<Scalar>& theta) mutable {
    unflatten(theta, scratch);
    return cross_entropy(model_forward(config, scratch, tokens).logits, targets).loss;
  };
}

/// Random tokens and random next-token targets.
std::pair<TokenMatrix, TokenMatrix> random_token_batch(int vocab, Index batch, Index seq_len,
                                                       std::uint64_t seed);

/// Compares model_backward against finite_diff over every parameter. A
/// tolerance violation yields a failing report rather than an exception.
GradCheckReport check_model(const ModelConfig& config, double tolerance,
                            const GradCheckOptions& options = {});

}  // namespace spannorm
