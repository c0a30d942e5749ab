#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "spannorm/model.hpp"

namespace spannorm {

/// Per-layer forward variance and backward gradient norms from one pass.
/// Activation-indexed vectors (var, gnorm_act) have L+1 entries for
/// X'_1 .. X'_{L+1}; block-indexed vectors have L entries.
struct PropagationTrace {
  int layers = 0;
  std::vector<double> var;        // mean per-token variance of X'_l
  std::vector<double> sigma_a;    // sqrt of mean per-token variance of A_l
  std::vector<double> sigma_z;    // same for Z_l
  std::vector<double> gnorm_act;  // ||dLoss/dX'_l||
  std::vector<double> gnorm_w2;   // ||dLoss/dW_2^(l)||
  double loss = 0.0;
  bool truncated = false;         // a non-finite activation stopped the trace
  int first_nonfinite = 0;        // 1-based activation index, 0 when not truncated
};

/// Collects a trace from an existing forward/backward pair.
PropagationTrace make_trace(const ModelCache& cache, const ModelGradients& grads, double loss);

/// One forward + backward at initialization (model seeded with `seed`) on a
/// random-token batch with random targets.
PropagationTrace trace_at_init(const ModelConfig& config, std::uint64_t seed, Index batch,
                               Index seq_len);

/// Closed-form cumulative gradient factor under a homogeneous pre-norm std
/// sigma > 1: sigma^(-2L) for PostNorm, sigma^(-L) for SpanNorm.
double decay_model(double sigma, int depth, TopologyKind topology);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  Index points = 0;
};

/// Ordinary least squares y = slope * x + intercept; R^2 clamped to [0, 1].
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

using DecayFit = LinearFit;

/// Least-squares fit of ln ||dLoss/dX'_l|| against l over the block outputs
/// (l = 2 .. L+1) with finite positive norms. The embedding gradient (l = 1)
/// is excluded because the embedding is not a normalized activation.
/// A positive slope means gradients shrink toward the input.
DecayFit fit_decay(const PropagationTrace& trace);

/// Fit of ln g_l against l for an explicit series (index l = 1 .. n).
DecayFit fit_decay(const std::vector<double>& gnorms);

struct DecayComparison {
  double post_slope = 0.0;   // mean fitted slope over seeds
  double span_slope = 0.0;
  double slope_ratio = 0.0;  // post / span
  double post_sigma = 0.0;   // geometric mean of sigma_Z over layers and seeds
  double span_sigma = 0.0;
};

/// Measures the PostNorm vs SpanNorm decay slopes at initialization for the
/// given model shape (topology in `base` is overridden).
DecayComparison compare_decay(const ModelConfig& base, const std::vector<std::uint64_t>& seeds,
                              Index batch, Index seq_len);

/// A differentiable map of a t x d input with an analytic vector-Jacobian
/// product.
struct DifferentiableMap {
  std::function<Matrix(const Matrix&)> apply;
  std::function<Matrix(const Matrix& x, const Matrix& cotangent)> vjp;
};

struct SpectralNormEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Power iteration on J^T J: J v by forward differencing of `map.apply`
/// (step `fd_step`), J^T u by `map.vjp`. Returns the largest ||J v|| seen,
/// which never decreases with more iterations.
SpectralNormEstimate jacobian_spectral_norm(const DifferentiableMap& map, const Matrix& x,
                                            int iterations, std::uint64_t seed,
                                            double fd_step = 1e-6, double tolerance = 1e-10);

/// The block at `layer` (1-based) as a map of its input.
DifferentiableMap block_map(const ModelConfig& config, const BlockParams& params, int layer,
                            Index seq_len);

/// x -> map(x) - x, for measuring ||J - I||.
DifferentiableMap minus_identity(DifferentiableMap map);

/// Per-layer spectral norms of the block Jacobians of a freshly initialized
/// model, evaluated at the activations of a random batch.
struct LayerJacobian {
  int layer = 0;
  double norm = 0.0;
  double norm_minus_identity = 0.0;
  bool converged = false;
};
std::vector<LayerJacobian> layer_jacobian_norms(const ModelConfig& config, std::uint64_t seed,
                                                Index seq_len, int iterations,
                                                const std::vector<int>& layers);

struct BranchVarianceOptions {
  std::vector<int> depths{4, 16, 64, 256};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  int width = 128;
  int ffn = 384;
  Index tokens = 256;
  InitKind init = InitKind::Scaled;
  double base_std = 0.02;
};

struct BranchVarianceResult {
  std::vector<int> depths;
  std::vector<double> variances;  // mean over seeds of Var(FFN(LN(x)))
  LinearFit loglog;               // ln Var against ln L
};

/// Output variance of a freshly initialized GELU FFN applied to layer-normed
/// Gaussian inputs.
double ffn_branch_variance(int width, int ffn, Index tokens, double w1_std, double w2_std,
                           std::uint64_t seed);

BranchVarianceResult branch_variance_check(const BranchVarianceOptions& options);

/// Var(x + branch) - (1 + Var(branch)): zero when x has unit variance and the
/// branch is uncorrelated with it.
double variance_sum_residual(const Matrix& x, const Matrix& branch);

/// variance_sum_residual for a block's FFN residual: Var(Z_l) - (1 + Var(FFN(Y_l))).
double variance_sum_check(const BlockCache& cache);

}  // namespace spannorm
