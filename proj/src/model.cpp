#include "spannorm/model.hpp"

#include <cmath>

namespace spannorm {

namespace {

template <typename Scalar>
void check_params(const ModelConfig& config, const BasicModelParams<Scalar>& params) {
  if (static_cast<int>(params.blocks.size()) != config.layers ||
      params.tok_emb.rows() != config.vocab || params.tok_emb.cols() != config.width ||
      params.pos_emb.rows() != config.seq) {
    throw ContractError("model: parameters do not match the configuration");
  }
}

}  // namespace

template <typename Scalar>
BasicModelOutput<Scalar> model_forward(const ModelConfig& config,
                                       const BasicModelParams<Scalar>& params,
                                       const TokenMatrix& tokens) {
  config.validate();
  check_params(config, params);
  const Index batch = tokens.rows();
  const Index t = tokens.cols();
  const Scalar embed_scale = embedding_scale<Scalar>(config);
  if (batch < 1 || t < 1) throw InputError("model_forward: empty token batch");
  if (t > config.seq) {
    throw ContractError("model_forward: sequence length " + std::to_string(t) +
                        " exceeds configured seq " + std::to_string(config.seq));
  }

  BasicModelOutput<Scalar> out;
  auto& cache = out.cache;
  cache.tokens = tokens;

  MatrixX<Scalar> x(batch * t, config.width);
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < t; ++i) {
      const int id = tokens(b, i);
      if (id < 0 || id >= config.vocab) {
        throw InputError("model_forward: token id " + std::to_string(id) + " outside [0, " +
                         std::to_string(config.vocab) + ")");
      }
      x.row(b * t + i) = embed_scale * (params.tok_emb.row(id) + params.pos_emb.row(i));
    }
  }

  const BlockContext ctx = BlockContext::from_config(config, t);
  cache.blocks.resize(config.layers);
  cache.activations.reserve(config.layers + 1);
  cache.activations.push_back(x);
  for (int l = 1; l <= config.layers; ++l) {
    x = block_forward(config.topology, params.blocks[l - 1], x, l, config.layers, ctx,
                      cache.blocks[l - 1]);
    cache.activations.push_back(x);
  }

  cache.final_norm = !params.final_ln.empty();
  if (cache.final_norm) {
    cache.head_input = norm_forward(params.final_ln, x, config.ln_eps, cache.final_stats);
  } else {
    cache.head_input = std::move(x);
  }
  out.logits.noalias() = cache.head_input * params.tok_emb.transpose();
  return out;
}

template <typename Scalar>
BasicModelGradients<Scalar> model_backward(const ModelConfig& config,
                                           const BasicModelParams<Scalar>& params,
                                           const BasicModelCache<Scalar>& cache,
                                           const MatrixX<Scalar>& grad_logits) {
  check_params(config, params);
  if (static_cast<int>(cache.blocks.size()) != config.layers ||
      grad_logits.rows() != cache.head_input.rows() || grad_logits.cols() != config.vocab) {
    throw ContractError("model_backward: cache does not match the forward pass");
  }
  const Index t = cache.tokens.cols();
  const Index batch = cache.tokens.rows();
  const BlockContext ctx = BlockContext::from_config(config, t);
  const Scalar embed_scale = embedding_scale<Scalar>(config);

  BasicModelGradients<Scalar> out;
  auto& g = out.params;
  g = zeros_like(params);
  out.activation_grad_norms.assign(config.layers + 1, 0.0);

  g.tok_emb.noalias() += grad_logits.transpose() * cache.head_input;
  MatrixX<Scalar> dx = grad_logits * params.tok_emb;
  if (cache.final_norm) {
    dx = norm_backward(params.final_ln, cache.final_stats, cache.activations.back(), dx,
                       g.final_ln);
  }
  out.activation_grad_norms[config.layers] = static_cast<double>(dx.norm());
  for (int l = config.layers; l >= 1; --l) {
    dx = block_backward(params.blocks[l - 1], cache.blocks[l - 1], dx, ctx, g.blocks[l - 1]);
    out.activation_grad_norms[l - 1] = static_cast<double>(dx.norm());
  }

  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < t; ++i) {
      g.tok_emb.row(cache.tokens(b, i)) += embed_scale * dx.row(b * t + i);
      g.pos_emb.row(i) += embed_scale * dx.row(b * t + i);
    }
  }
  return out;
}

template <typename Scalar>
BasicLossOutput<Scalar> cross_entropy(const MatrixX<Scalar>& logits, const TokenMatrix& targets) {
  if (logits.rows() != targets.size()) {
    throw DimensionError("cross_entropy: " + shape_string(logits) + " logits for " +
                         std::to_string(targets.size()) + " targets");
  }
  BasicLossOutput<Scalar> out;
  out.grad_logits = MatrixX<Scalar>::Zero(logits.rows(), logits.cols());
  const int* tgt = targets.data();
  for (Index r = 0; r < logits.rows(); ++r) {
    if (tgt[r] >= 0) ++out.count;
  }
  if (out.count == 0) return out;
  const Scalar inv_count = Scalar(1) / static_cast<Scalar>(out.count);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> e;
  for (Index r = 0; r < logits.rows(); ++r) {
    const int target = tgt[r];
    if (target < 0) continue;
    if (target >= logits.cols()) {
      throw InputError("cross_entropy: target " + std::to_string(target) + " outside vocab");
    }
    const auto row = logits.row(r);
    const Scalar peak = row.maxCoeff();
    e = (row.array() - peak).exp();
    const Scalar z = e.sum();
    out.loss += (std::log(z) + peak - row(target)) * inv_count;
    out.grad_logits.row(r) = e * (inv_count / z);
    out.grad_logits(r, target) -= inv_count;
  }
  return out;
}

#define SPANNORM_INSTANTIATE(S)                                                                \
  template BasicModelOutput<S> model_forward(const ModelConfig&, const BasicModelParams<S>&,   \
                                             const TokenMatrix&);                              \
  template BasicModelGradients<S> model_backward(const ModelConfig&, const BasicModelParams<S>&, \
                                                 const BasicModelCache<S>&, const MatrixX<S>&); \
  template BasicLossOutput<S> cross_entropy(const MatrixX<S>&, const TokenMatrix&);
SPANNORM_INSTANTIATE(double)
SPANNORM_INSTANTIATE(long double)
#undef SPANNORM_INSTANTIATE

}  // namespace spannorm
