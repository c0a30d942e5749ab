#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "spannorm/dynamics.hpp"
#include "spannorm/errors.hpp"
#include "spannorm/gradcheck.hpp"
#include "spannorm/rng.hpp"

using namespace spannorm;

namespace {

ModelConfig desk(TopologyKind kind, int layers, int width = 128) {
  ModelConfig c;
  c.layers = layers;
  c.width = width;
  c.heads = 4;
  c.ffn = 3 * width;
  c.vocab = 128;
  c.seq = 64;
  c.topology.kind = kind;
  c.init = {InitKind::Scaled, 0.02, 1};
  return c;
}

DifferentiableMap linear_map(const Matrix& a) {
  DifferentiableMap m;
  m.apply = [a](const Matrix& x) { return Matrix(x * a); };
  m.vjp = [a](const Matrix&, const Matrix& u) { return Matrix(u * a.transpose()); };
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("decay_model examples") {
  CHECK(decay_model(2.0, 4, TopologyKind::PostNorm) == std::ldexp(1.0, -8));
  CHECK(decay_model(2.0, 4, TopologyKind::SpanNorm) == std::ldexp(1.0, -4));
  const double ratio = decay_model(1.05, 128, TopologyKind::SpanNorm) /
                       decay_model(1.05, 128, TopologyKind::PostNorm);
  CHECK(ratio == doctest::Approx(std::pow(1.05, 128)).epsilon(1e-12));
  CHECK(ratio > 490.0);
  CHECK(ratio < 540.0);
  CHECK(decay_model(1.0 + 1e-12, 10, TopologyKind::PostNorm) == doctest::Approx(1.0));
  CHECK(decay_model(1.0 + 1e-12, 10, TopologyKind::SpanNorm) == doctest::Approx(1.0));

  CHECK_THROWS_AS(decay_model(1.0, 4, TopologyKind::SpanNorm), DomainError);
  CHECK_THROWS_AS(decay_model(0.5, 4, TopologyKind::PostNorm), DomainError);
  CHECK_THROWS_AS(decay_model(2.0, 4, TopologyKind::PreNorm), ContractError);
  CHECK_THROWS_AS(decay_model(2.0, 0, TopologyKind::SpanNorm), ContractError);
}

TEST_CASE("decay_model span squared equals post") {
  SeededRng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double sigma = 1.0 + 2.0 * rng.uniform() + 1e-9;
    const int depth = 1 + static_cast<int>(rng.below(64));
    const double span = decay_model(sigma, depth, TopologyKind::SpanNorm);
    const double post = decay_model(sigma, depth, TopologyKind::PostNorm);
    CHECK(span * span == post);
  }
}

TEST_CASE("fit_decay on synthetic traces") {
  std::vector<double> g;
  for (int l = 1; l <= 10; ++l) g.push_back(0.3 * std::pow(0.8, l));
  DecayFit fit = fit_decay(g);
  CHECK(std::abs(fit.slope - std::log(0.8)) < 1e-9);
  CHECK(std::abs(fit.intercept - std::log(0.3)) < 1e-9);
  CHECK(fit.r2 == doctest::Approx(1.0));
  CHECK(fit.points == 10);

  fit = fit_decay(std::vector<double>(6, 2.5));
  CHECK(fit.slope == doctest::Approx(0.0).scale(1.0));
  CHECK(fit.r2 >= 0.0);
  CHECK(fit.r2 <= 1.0);

  CHECK_THROWS_AS(fit_decay(std::vector<double>{1.0, 2.0}), InsufficientDataError);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_decay(std::vector<double>{1.0, nan, 0.0, 2.0}), InsufficientDataError);

  PropagationTrace trace;
  trace.gnorm_act = {100.0, 1.0, 2.0, 4.0, 8.0};
  fit = fit_decay(trace);
  CHECK(fit.points == 4);
  CHECK(std::abs(fit.slope - std::log(2.0)) < 1e-12);
}

TEST_CASE("linear_fit r2 stays in range") {
  SeededRng rng(3);
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(i);
    y.push_back(rng.normal());
  }
  const LinearFit fit = linear_fit(x, y);
  CHECK(fit.r2 >= 0.0);
  CHECK(fit.r2 <= 1.0);
  CHECK_THROWS_AS(linear_fit({1.0}, {2.0}), InsufficientDataError);
  CHECK_THROWS_AS(linear_fit({1.0, 2.0}, {2.0}), ContractError);
}

TEST_CASE("trace_at_init SpanNorm holds unit variance and PreNorm grows") {
  const PropagationTrace span = trace_at_init(desk(TopologyKind::SpanNorm, 12), 1, 2, 32);
  CHECK_FALSE(span.truncated);
  REQUIRE(span.var.size() == 13);
  for (std::size_t l = 1; l < span.var.size(); ++l) CHECK(std::abs(span.var[l] - 1.0) <= 1e-3);
  CHECK(span.sigma_a.size() == 12);
  CHECK(span.sigma_z.size() == 12);
  CHECK(span.gnorm_act.size() == 13);
  CHECK(span.gnorm_w2.size() == 12);
  for (const double v : span.gnorm_w2) CHECK(v >= 0.0);

  const PropagationTrace pre = trace_at_init(desk(TopologyKind::PreNorm, 64), 1, 2, 32);
  std::vector<double> x;
  for (std::size_t l = 0; l < pre.var.size(); ++l) x.push_back(static_cast<double>(l + 1));
  const LinearFit fit = linear_fit(x, pre.var);
  CHECK(fit.slope > 0.0);
  CHECK(fit.r2 > 0.9);
}

TEST_CASE("single-layer trace starts from the embedding variance") {
  ModelConfig c = desk(TopologyKind::SpanNorm, 1, 32);
  c.seed = 4;
  const ModelParams params = init_model(c);
  const auto [tokens, targets] = random_token_batch(c.vocab, 1, 8, 4);
  const ModelOutput fwd = model_forward(c, params, tokens);
  Matrix e(8, 32);
  for (Index i = 0; i < 8; ++i)
    e.row(i) = std::sqrt(32.0) * (params.tok_emb.row(tokens(0, i)) + params.pos_emb.row(i));
  const PropagationTrace trace = trace_at_init(c, 4, 1, 8);
  CHECK(trace.var[0] == doctest::Approx(mean_token_variance(e)).epsilon(1e-12));
  CHECK(trace.var.size() == 2);
}

TEST_CASE("make_trace truncates at the first non-finite activation") {
  ModelConfig c = desk(TopologyKind::PostNorm, 4, 16);
  c.heads = 2;
  const ModelParams params = init_model(c);
  const auto [tokens, targets] = random_token_batch(c.vocab, 1, 4, 2);
  ModelOutput fwd = model_forward(c, params, tokens);
  const LossOutput loss = cross_entropy(fwd.logits, targets);
  const ModelGradients grads = model_backward(c, params, fwd.cache, loss.grad_logits);
  fwd.cache.activations[3](1, 2) = std::numeric_limits<double>::infinity();
  const PropagationTrace trace = make_trace(fwd.cache, grads, loss.loss);
  CHECK(trace.truncated);
  CHECK(trace.first_nonfinite == 4);
  CHECK(trace.var.size() == 3);
  CHECK(trace.gnorm_act.empty());
}

TEST_CASE("SpanNorm under Scale Init never truncates at extreme shapes") {
  ModelConfig deep = desk(TopologyKind::SpanNorm, 512, 16);
  deep.heads = 2;
  CHECK_FALSE(trace_at_init(deep, 1, 1, 4).truncated);
  ModelConfig wide = desk(TopologyKind::SpanNorm, 4, 512);
  wide.heads = 8;
  CHECK_FALSE(trace_at_init(wide, 1, 1, 4).truncated);
}

TEST_CASE("jacobian_spectral_norm on linear maps") {
  const Matrix x = Matrix::Random(1, 2);
  CHECK(std::abs(jacobian_spectral_norm(linear_map(Matrix::Identity(2, 2)), x, 20, 1).value - 1.0) < 1e-6);
  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 3.0, 1.0;
  const SpectralNormEstimate est = jacobian_spectral_norm(linear_map(d), x, 60, 1);
  CHECK(std::abs(est.value - 3.0) < 1e-6);
  CHECK(est.converged);

  Matrix a(4, 4);
  SeededRng rng(8);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  const Matrix x4 = Matrix::Random(3, 4);
  double previous = 0.0;
  for (int k = 1; k <= 30; ++k) {
    const double v = jacobian_spectral_norm(linear_map(a), x4, k, 2).value;
    CHECK(v >= previous);
    previous = v;
  }
  CHECK_THROWS_AS(jacobian_spectral_norm(linear_map(a), x4, 0, 2), ContractError);
}

TEST_CASE("minus_identity subtracts the identity") {
  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 3.0, 1.5;
  const Matrix x = Matrix::Random(1, 2);
  CHECK(std::abs(jacobian_spectral_norm(minus_identity(linear_map(d)), x, 60, 1).value - 2.0) < 1e-6);
}

TEST_CASE("block_map vjp matches finite differences") {
  ModelConfig c = desk(TopologyKind::SpanNorm, 3, 16);
  c.heads = 2;
  c.init.base_std = 0.3;
  const ModelParams params = init_model(c);
  const DifferentiableMap map = block_map(c, params.blocks[1], 2, 3);
  const Matrix x = Matrix::Random(3, 16);
  const Matrix u = Matrix::Random(3, 16);
  const Matrix g = map.vjp(x, u);
  const ScalarFunction<double> f = [&](const Vector& v) {
    return (map.apply(Eigen::Map<const Matrix>(v.data(), 3, 16)).array() * u.array()).sum();
  };
  const Vector flat = Eigen::Map<const Vector>(x.data(), x.size());
  const Vector fd = finite_diff(f, flat, 1e-5);
  CHECK((fd - Eigen::Map<const Vector>(g.data(), g.size())).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("SpanNorm block Jacobian norm stays near one at Scale Init") {
  const ModelConfig c = desk(TopologyKind::SpanNorm, 64);
  for (std::uint64_t seed = 1; seed <= 16; ++seed) {
    const auto rows = layer_jacobian_norms(c, seed, 8, 30, {32});
    CAPTURE(seed);
    CHECK(rows[0].norm >= 0.8);
    CHECK(rows[0].norm <= 1.2);
  }
}

TEST_CASE("PreNorm block Jacobian approaches the identity with depth") {
  const ModelConfig c = desk(TopologyKind::PreNorm, 64);
  std::vector<double> early, late;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rows = layer_jacobian_norms(c, seed, 8, 30, {16, 64});
    early.push_back(rows[0].norm_minus_identity);
    late.push_back(rows[1].norm_minus_identity);
  }
  CHECK(median(late) < median(early));
}

TEST_CASE("FFN branch variance scaling with depth") {
  const double base = ffn_branch_variance(64, 192, 128, 0.05, 0.05, 7);
  const double doubled = ffn_branch_variance(64, 192, 128, 0.05, 0.1, 7);
  CHECK(doubled / base == doctest::Approx(4.0).epsilon(1e-12));

  BranchVarianceOptions opt;
  opt.width = 64;
  opt.ffn = 192;
  opt.tokens = 128;
  opt.depths = {4, 16, 64};
  opt.seeds = {1, 2};
  CHECK(std::abs(branch_variance_check(opt).loglog.slope + 1.0) < 0.15);
  opt.init = InitKind::Global;
  CHECK(std::abs(branch_variance_check(opt).loglog.slope) < 0.1);
}

TEST_CASE("variance_sum_residual examples") {
  const Matrix x = layer_norm_forward(Matrix(Matrix::Random(32, 16)), Vector::Ones(16),
                                      Vector::Zero(16), 0.0).first;
  CHECK(std::abs(variance_sum_residual(x, Matrix::Zero(32, 16))) < 1e-12);
  CHECK(variance_sum_residual(x, x) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(variance_sum_residual(x, Matrix::Zero(3, 16)), DimensionError);

  ModelConfig c = desk(TopologyKind::SpanNorm, 4, 256);
  c.ffn = 768;
  const ModelParams params = init_model(c);
  const auto tokens = random_token_batch(c.vocab, 16, 64, 5).first;
  const ModelOutput fwd = model_forward(c, params, tokens);
  CHECK(std::abs(variance_sum_check(fwd.cache.blocks[1])) < 0.05);
}
