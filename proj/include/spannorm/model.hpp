#pragma once

#include <cmath>
#include <vector>

#include "spannorm/block.hpp"

namespace spannorm {

using TokenMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct BasicModelCache {
  TokenMatrix tokens;                              // batch x seq_len
  std::vector<BasicBlockCache<Scalar>> blocks;     // one per layer
  std::vector<MatrixX<Scalar>> activations;        // X'_1 (embeddings) .. X'_{L+1}
  bool final_norm = false;
  LayerNormStats<Scalar> final_stats;
  MatrixX<Scalar> head_input;
};

template <typename Scalar>
struct BasicModelOutput {
  MatrixX<Scalar> logits;  // (batch * seq_len) x vocab
  BasicModelCache<Scalar> cache;
};

template <typename Scalar>
struct BasicModelGradients {
  BasicModelParams<Scalar> params;
  // Frobenius norm of dLoss/dX'_l for l = 1 .. L+1 (index 0 is the embedding).
  std::vector<double> activation_grad_norms;
};

template <typename Scalar>
struct BasicLossOutput {
  Scalar loss = 0;
  MatrixX<Scalar> grad_logits;
  Index count = 0;  // number of scored positions
};

using ModelCache = BasicModelCache<double>;
using ModelOutput = BasicModelOutput<double>;
using ModelGradients = BasicModelGradients<double>;
using LossOutput = BasicLossOutput<double>;

/// The embedding sum (token + position) enters the residual stream multiplied
/// by sqrt(d); the tied output head uses the token table unscaled.
template <typename Scalar>
Scalar embedding_scale(const ModelConfig& config) {
  using std::sqrt;
  return sqrt(static_cast<Scalar>(config.width));
}

/// Embedding lookup (+ learned positions), L blocks, optional final LN and the
/// tied output head.
template <typename Scalar>
BasicModelOutput<Scalar> model_forward(const ModelConfig& config,
                                       const BasicModelParams<Scalar>& params,
                                       const TokenMatrix& tokens);

template <typename Scalar>
BasicModelGradients<Scalar> model_backward(const ModelConfig& config,
                                           const BasicModelParams<Scalar>& params,
                                           const BasicModelCache<Scalar>& cache,
                                           const MatrixX<Scalar>& grad_logits);

/// Mean cross-entropy over positions whose target is >= 0; negative targets
/// are masked out.
template <typename Scalar>
BasicLossOutput<Scalar> cross_entropy(const MatrixX<Scalar>& logits, const TokenMatrix& targets);

}  // namespace spannorm
