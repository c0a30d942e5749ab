#include "spannorm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "spannorm/errors.hpp"

namespace spannorm {

Vector symmetric_eigenvalues(const Matrix& sym) {
  if (sym.rows() != sym.cols()) {
    throw DimensionError("symmetric_eigenvalues: matrix " + shape_string(sym) + " is not square");
  }
  if (!all_finite(sym)) throw NumericError("symmetric_eigenvalues: non-finite input");
  const Index n = sym.rows();
  Eigen::MatrixXd a = sym;
  const double scale = a.norm();
  if (scale == 0.0) return Vector::Zero(n);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= 1e-15 * scale) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  Vector eig = a.diagonal();
  std::sort(eig.data(), eig.data() + n, std::greater<>());
  return eig;
}

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) throw DimensionError("singular_values: empty matrix");
  if (!all_finite(m)) throw NumericError("singular_values: non-finite entry");
  const Matrix gram = m.rows() <= m.cols() ? Matrix(m * m.transpose()) : Matrix(m.transpose() * m);
  Vector eig = symmetric_eigenvalues(gram);
  for (Index i = 0; i < eig.size(); ++i) eig[i] = std::sqrt(std::max(eig[i], 0.0));
  return eig;
}

RankMetrics rank_metrics(const Vector& sigmas, double eps, Index d) {
  if (sigmas.size() == 0) throw DimensionError("rank_metrics: empty spectrum");
  if (!all_finite(sigmas)) throw NumericError("rank_metrics: non-finite singular value");
  if ((sigmas.array() < 0.0).any()) throw ContractError("rank_metrics: negative singular value");
  if (d <= 0) d = sigmas.size();
  const double dd = static_cast<double>(d);
  RankMetrics r;
  const double top = sigmas.maxCoeff();
  const double sum = sigmas.sum();
  if (sum == 0.0) return r;
  Index hard = 0;
  double entropy = 0.0;
  for (Index i = 0; i < sigmas.size(); ++i) {
    if (sigmas[i] > eps * top) ++hard;
    const double p = sigmas[i] / sum;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  r.hard = static_cast<double>(hard) / dd;
  r.soft = std::exp(entropy) / dd;
  r.edr = 100.0 * sum * sum / (dd * sigmas.squaredNorm());
  return r;
}

ConditionNumber condition_number(const Vector& sigmas) {
  if (sigmas.size() == 0) throw DimensionError("condition_number: empty spectrum");
  if (!all_finite(sigmas)) throw NumericError("condition_number: non-finite singular value");
  const double hi = sigmas.maxCoeff();
  const double lo = sigmas.minCoeff();
  ConditionNumber c;
  if (hi == 0.0 || lo < 1e-12 * hi) {
    c.rank_deficient = true;
    c.value = std::numeric_limits<double>::infinity();
    return c;
  }
  c.value = hi / lo;
  return c;
}

ConditionNumber condition_number(const Matrix& m) { return condition_number(singular_values(m)); }

SpectralReport spectral_report(const Matrix& m, double eps) {
  SpectralReport r;
  r.singular_values = singular_values(m);
  r.ranks = rank_metrics(r.singular_values, eps);
  r.condition = condition_number(r.singular_values);
  return r;
}

NormalizedSpectrum eigenspectrum_over_median(const Matrix& rows) {
  if (rows.rows() < 2) throw InsufficientDataError("eigenspectrum_over_median: need two rows");
  if (!all_finite(rows)) throw NumericError("eigenspectrum_over_median: non-finite entry");
  const Matrix centered = rows.rowwise() - rows.colwise().mean();
  if (centered.cwiseAbs().maxCoeff() == 0.0) {
    throw NumericError("eigenspectrum_over_median: covariance has rank 0");
  }
  const Matrix cov = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
  const Vector eig = symmetric_eigenvalues(cov);
  const Index n = eig.size();
  const double median = n % 2 == 1 ? eig[n / 2] : 0.5 * (eig[n / 2 - 1] + eig[n / 2]);
  if (!(std::abs(median) > 1e-12 * std::abs(eig[0]))) {
    throw DegenerateError("eigenspectrum_over_median: median eigenvalue is zero");
  }
  NormalizedSpectrum out;
  out.median = median;
  out.normalized = eig / median;
  out.rank_fraction.resize(n);
  for (Index i = 0; i < n; ++i) out.rank_fraction[i] = static_cast<double>(i + 1) / n;
  return out;
}

SimilarityMatrix layer_similarity(const std::vector<Matrix>& activations) {
  if (activations.size() < 2) throw ContractError("layer_similarity: need at least two layers");
  const Index layers = static_cast<Index>(activations.size());
  const Index t = activations[0].rows();
  const Index d = activations[0].cols();
  for (const auto& a : activations) {
    if (a.rows() != t || a.cols() != d) {
      throw DimensionError("layer_similarity: layer shape " + shape_string(a) + " differs from " +
                           shape_string(activations[0]));
    }
  }
  std::vector<Vector> norms;
  std::vector<bool> keep(t, true);
  for (const auto& a : activations) {
    norms.push_back(a.rowwise().norm());
    for (Index i = 0; i < t; ++i) {
      if (!(norms.back()[i] > 0.0)) keep[i] = false;
    }
  }
  SimilarityMatrix out;
  out.excluded_tokens = std::count(keep.begin(), keep.end(), false);
  const Index used = t - out.excluded_tokens;
  if (used == 0) throw DegenerateError("layer_similarity: every token has zero norm");
  out.mean_cosine = Matrix::Zero(layers, layers);
  for (Index i = 0; i < layers; ++i) {
    for (Index j = i; j < layers; ++j) {
      double sum = 0.0;
      for (Index k = 0; k < t; ++k) {
        if (!keep[k]) continue;
        sum += activations[i].row(k).dot(activations[j].row(k)) / (norms[i][k] * norms[j][k]);
      }
      out.mean_cosine(i, j) = out.mean_cosine(j, i) = sum / static_cast<double>(used);
    }
  }
  out.by_distance = Vector::Zero(layers);
  for (Index k = 0; k < layers; ++k) {
    double sum = 0.0;
    for (Index i = 0; i + k < layers; ++i) sum += out.mean_cosine(i, i + k);
    out.by_distance[k] = sum / static_cast<double>(layers - k);
  }
  return out;
}

}  // namespace spannorm
