#include "spannorm/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spannorm/gradcheck.hpp"
#include "spannorm/rng.hpp"

namespace spannorm {

namespace {

double token_std(const Matrix& m) { return std::sqrt(mean_token_variance(m)); }

}  // namespace

PropagationTrace make_trace(const ModelCache& cache, const ModelGradients& grads, double loss) {
  PropagationTrace trace;
  trace.layers = static_cast<int>(cache.blocks.size());
  trace.loss = loss;
  for (std::size_t i = 0; i < cache.activations.size(); ++i) {
    if (!all_finite(cache.activations[i])) {
      trace.truncated = true;
      trace.first_nonfinite = static_cast<int>(i) + 1;
      break;
    }
    trace.var.push_back(mean_token_variance(cache.activations[i]));
  }
  const std::size_t finite_blocks =
      trace.truncated ? static_cast<std::size_t>(trace.first_nonfinite - 1) : cache.blocks.size();
  for (std::size_t l = 0; l < finite_blocks && l < cache.blocks.size(); ++l) {
    trace.sigma_a.push_back(token_std(cache.blocks[l].attn_sum));
    trace.sigma_z.push_back(token_std(cache.blocks[l].ffn_sum));
  }
  if (trace.truncated || !std::isfinite(loss)) return trace;
  trace.gnorm_act = grads.activation_grad_norms;
  for (const auto& block : grads.params.blocks) trace.gnorm_w2.push_back(block.w2.norm());
  return trace;
}

PropagationTrace trace_at_init(const ModelConfig& config, std::uint64_t seed, Index batch,
                               Index seq_len) {
  ModelConfig seeded = config;
  seeded.seed = seed;
  const ModelParams params = init_model(seeded);
  const auto [tokens, targets] = random_token_batch(config.vocab, batch, seq_len, seed);
  const ModelOutput fwd = model_forward(seeded, params, tokens);
  const LossOutput loss = cross_entropy(fwd.logits, targets);
  if (!std::isfinite(loss.loss)) return make_trace(fwd.cache, ModelGradients{}, loss.loss);
  const ModelGradients grads = model_backward(seeded, params, fwd.cache, loss.grad_logits);
  return make_trace(fwd.cache, grads, loss.loss);
}

double decay_model(double sigma, int depth, TopologyKind topology) {
  if (!(sigma > 1.0)) throw DomainError("decay_model: sigma must exceed 1");
  if (depth < 1) throw ContractError("decay_model: depth must be positive");
  const double once = std::pow(sigma, -static_cast<double>(depth));
  switch (topology) {
    case TopologyKind::PostNorm: return once * once;  // two norms per block
    case TopologyKind::SpanNorm: return once;
    default: throw ContractError("decay_model: only PostNorm and SpanNorm have a closed form");
  }
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractError("linear_fit: x and y differ in length");
  const auto n = static_cast<Index>(x.size());
  if (n < 2) throw InsufficientDataError("linear_fit: need at least two points");
  double mx = 0.0, my = 0.0;
  for (Index i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (Index i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw InsufficientDataError("linear_fit: all x values coincide");
  LinearFit fit;
  fit.points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return fit;
}

DecayFit fit_decay(const std::vector<double>& gnorms) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < gnorms.size(); ++i) {
    if (std::isfinite(gnorms[i]) && gnorms[i] > 0.0) {
      x.push_back(static_cast<double>(i + 1));
      y.push_back(std::log(gnorms[i]));
    }
  }
  if (x.size() < 3) {
    throw InsufficientDataError("fit_decay: fewer than three finite gradient norms");
  }
  return linear_fit(x, y);
}

DecayFit fit_decay(const PropagationTrace& trace) {
  std::vector<double> x, y;
  for (std::size_t i = 1; i < trace.gnorm_act.size(); ++i) {
    const double g = trace.gnorm_act[i];
    if (std::isfinite(g) && g > 0.0) {
      x.push_back(static_cast<double>(i + 1));
      y.push_back(std::log(g));
    }
  }
  if (x.size() < 3) {
    throw InsufficientDataError("fit_decay: fewer than three finite gradient norms");
  }
  return linear_fit(x, y);
}

DecayComparison compare_decay(const ModelConfig& base, const std::vector<std::uint64_t>& seeds,
                              Index batch, Index seq_len) {
  if (seeds.empty()) throw ContractError("compare_decay: no seeds");
  DecayComparison out;
  double log_sigma_post = 0.0, log_sigma_span = 0.0;
  std::size_t count_post = 0, count_span = 0;
  for (const auto kind : {TopologyKind::PostNorm, TopologyKind::SpanNorm}) {
    ModelConfig config = base;
    config.topology.kind = kind;
    double slope_sum = 0.0;
    for (const auto seed : seeds) {
      const PropagationTrace trace = trace_at_init(config, seed, batch, seq_len);
      slope_sum += fit_decay(trace).slope;
      for (const double s : trace.sigma_z) {
        if (kind == TopologyKind::PostNorm) {
          log_sigma_post += std::log(s);
          ++count_post;
        } else {
          log_sigma_span += std::log(s);
          ++count_span;
        }
      }
    }
    const double slope = slope_sum / static_cast<double>(seeds.size());
    (kind == TopologyKind::PostNorm ? out.post_slope : out.span_slope) = slope;
  }
  out.post_sigma = std::exp(log_sigma_post / static_cast<double>(std::max<std::size_t>(count_post, 1)));
  out.span_sigma = std::exp(log_sigma_span / static_cast<double>(std::max<std::size_t>(count_span, 1)));
  out.slope_ratio = out.post_slope / out.span_slope;
  return out;
}

SpectralNormEstimate jacobian_spectral_norm(const DifferentiableMap& map, const Matrix& x,
                                            int iterations, std::uint64_t seed, double fd_step,
                                            double tolerance) {
  if (iterations < 1) throw ContractError("jacobian_spectral_norm: iterations must be positive");
  if (!(fd_step > 0.0)) throw ContractError("jacobian_spectral_norm: step must be positive");
  SeededRng rng(seed, /*stream=*/5);
  Matrix v(x.rows(), x.cols());
  for (Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
  v /= v.norm();
  const Matrix base = map.apply(x);

  SpectralNormEstimate est;
  double previous = 0.0;
  for (int k = 1; k <= iterations; ++k) {
    const Matrix jv = (map.apply(x + fd_step * v) - base) / fd_step;
    const double value = jv.norm();
    if (!std::isfinite(value)) throw NumericError("jacobian_spectral_norm: non-finite JVP");
    est.value = std::max(est.value, value);
    est.iterations = k;
    if (k > 1 && std::abs(value - previous) <= tolerance * std::max(value, 1e-300)) {
      est.converged = true;
      break;
    }
    previous = value;
    Matrix w = map.vjp(x, jv);
    const double wn = w.norm();
    if (wn == 0.0) {
      est.converged = true;
      break;
    }
    v = w / wn;
  }
  return est;
}

DifferentiableMap block_map(const ModelConfig& config, const BlockParams& params, int layer,
                            Index seq_len) {
  const BlockContext ctx = BlockContext::from_config(config, seq_len);
  const WiringInfo info = wiring_for(config.topology, layer, config.layers);
  DifferentiableMap map;
  map.apply = [=](const Matrix& x) {
    BlockCache cache;
    return block_forward(info, params, x, ctx, cache);
  };
  map.vjp = [=](const Matrix& x, const Matrix& cotangent) {
    BlockCache cache;
    block_forward(info, params, x, ctx, cache);
    BlockParams grads = zeros_like(params);
    return block_backward(params, cache, cotangent, ctx, grads);
  };
  return map;
}

DifferentiableMap minus_identity(DifferentiableMap map) {
  DifferentiableMap out;
  out.apply = [f = map.apply](const Matrix& x) { return Matrix(f(x) - x); };
  out.vjp = [g = map.vjp](const Matrix& x, const Matrix& u) { return Matrix(g(x, u) - u); };
  return out;
}

std::vector<LayerJacobian> layer_jacobian_norms(const ModelConfig& config, std::uint64_t seed,
                                                Index seq_len, int iterations,
                                                const std::vector<int>& layers) {
  ModelConfig seeded = config;
  seeded.seed = seed;
  const ModelParams params = init_model(seeded);
  const auto tokens = random_token_batch(config.vocab, 1, seq_len, seed).first;
  const ModelOutput fwd = model_forward(seeded, params, tokens);
  std::vector<LayerJacobian> out;
  for (const int layer : layers) {
    if (layer < 1 || layer > config.layers) {
      throw ContractError("layer_jacobian_norms: layer out of range");
    }
    const Matrix& x = fwd.cache.activations[layer - 1];
    const DifferentiableMap map = block_map(seeded, params.blocks[layer - 1], layer, seq_len);
    LayerJacobian row;
    row.layer = layer;
    const auto full = jacobian_spectral_norm(map, x, iterations, seed + layer);
    const auto diff = jacobian_spectral_norm(minus_identity(map), x, iterations, seed + layer);
    row.norm = full.value;
    row.norm_minus_identity = diff.value;
    row.converged = full.converged && diff.converged;
    out.push_back(row);
  }
  return out;
}

double ffn_branch_variance(int width, int ffn, Index tokens, double w1_std, double w2_std,
                           std::uint64_t seed) {
  SeededRng rng(seed, /*stream=*/9);
  Matrix x(tokens, width);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Matrix w1(width, ffn), w2(ffn, width);
  for (Index i = 0; i < w1.size(); ++i) w1.data()[i] = w1_std * rng.normal();
  for (Index i = 0; i < w2.size(); ++i) w2.data()[i] = w2_std * rng.normal();
  const Vector gain = Vector::Ones(width);
  const Vector bias = Vector::Zero(width);
  const Matrix normed = layer_norm_forward(x, gain, bias, 1e-5).first;
  const Matrix hidden = matmul(normed, w1).unaryExpr([](double v) { return gelu(v); });
  return mean_token_variance(matmul(hidden, w2));
}

BranchVarianceResult branch_variance_check(const BranchVarianceOptions& options) {
  if (options.depths.size() < 2) throw InsufficientDataError("branch_variance_check: need two depths");
  if (options.seeds.empty()) throw ContractError("branch_variance_check: no seeds");
  BranchVarianceResult result;
  std::vector<double> lx, ly;
  for (const int depth : options.depths) {
    if (depth < 1) throw ContractError("branch_variance_check: depth must be positive");
    InitStrategy strategy{options.init, options.base_std, depth};
    const double w1_std = init_std(strategy, InitRole::Standard);
    const double w2_std = init_std(strategy, InitRole::ScaledOutput);
    double sum = 0.0;
    for (const auto seed : options.seeds) {
      const std::uint64_t cell = seed * 1000003ULL + static_cast<std::uint64_t>(depth);
      sum += ffn_branch_variance(options.width, options.ffn, options.tokens, w1_std, w2_std, cell);
    }
    const double var = sum / static_cast<double>(options.seeds.size());
    result.depths.push_back(depth);
    result.variances.push_back(var);
    lx.push_back(std::log(static_cast<double>(depth)));
    ly.push_back(std::log(var));
  }
  result.loglog = linear_fit(lx, ly);
  return result;
}

double variance_sum_residual(const Matrix& x, const Matrix& branch) {
  if (x.rows() != branch.rows() || x.cols() != branch.cols()) {
    throw DimensionError("variance_sum_residual: shapes " + shape_string(x) + " and " +
                         shape_string(branch) + " differ");
  }
  return mean_token_variance(Matrix(x + branch)) - (1.0 + mean_token_variance(branch));
}

double variance_sum_check(const BlockCache& cache) {
  return variance_sum_residual(cache.input, cache.ffn_branch);
}

}  // namespace spannorm
