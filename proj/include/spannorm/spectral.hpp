#pragma once

#include <limits>
#include <vector>

#include "spannorm/tensor.hpp"

namespace spannorm {

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
Vector symmetric_eigenvalues(const Matrix& sym);

/// Singular values from the eigenvalues of the smaller Gram matrix (M^T M or
/// M M^T), square roots clamped at zero, descending.
Vector singular_values(const Matrix& m);

struct RankMetrics {
  double hard = 0.0;  // |{sigma_i > eps * sigma_1}| / d
  double soft = 0.0;  // exp(entropy of sigma / sum sigma) / d
  double edr = 0.0;   // 100 (sum sigma)^2 / (d sum sigma^2)
};

/// `sigmas` must be non-negative; d defaults to the spectrum length.
RankMetrics rank_metrics(const Vector& sigmas, double eps = 0.01, Index d = 0);

struct ConditionNumber {
  double value = 0.0;  // +infinity when rank deficient
  bool rank_deficient = false;
};

/// sigma_max / sigma_min, with sigma_min below 1e-12 * sigma_max reported as
/// rank deficient.
ConditionNumber condition_number(const Vector& sigmas);
ConditionNumber condition_number(const Matrix& m);

struct SpectralReport {
  Vector singular_values;
  RankMetrics ranks;
  ConditionNumber condition;
};

SpectralReport spectral_report(const Matrix& m, double eps = 0.01);

struct NormalizedSpectrum {
  Vector normalized;     // eigenvalues / median, descending
  Vector rank_fraction;  // i / n for i = 1 .. n
  double median = 0.0;
};

/// Row-centered covariance (divided by n-1) of the rows of `rows` (n x d),
/// eigenvalues divided by their median.
NormalizedSpectrum eigenspectrum_over_median(const Matrix& rows);

struct SimilarityMatrix {
  Matrix mean_cosine;         // L x L
  Vector by_distance;         // mean over pairs (i, i+k), index k = 0 .. L-1
  Index excluded_tokens = 0;  // tokens skipped for having zero norm in some layer
};

/// Mean over tokens of the cosine similarity between every pair of layer
/// activations (each t x d).
SimilarityMatrix layer_similarity(const std::vector<Matrix>& activations);

}  // namespace spannorm
