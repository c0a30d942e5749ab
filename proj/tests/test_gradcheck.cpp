#include <doctest.h>

#include <cmath>
#include <limits>

#include "spannorm/errors.hpp"
#include "spannorm/gradcheck.hpp"

using namespace spannorm;

namespace {

ModelConfig tiny(TopologyKind kind) {
  ModelConfig c;
  c.layers = 2;
  c.width = 8;
  c.heads = 2;
  c.ffn = 16;
  c.vocab = 11;
  c.seq = 4;
  c.topology.kind = kind;
  c.init = {InitKind::Scaled, 0.3, 1};
  c.seed = 3;
  return c;
}

const TopologyKind kAll[] = {TopologyKind::PostNorm,   TopologyKind::PreNorm, TopologyKind::SpanNorm,
                             TopologyKind::HybridNorm, TopologyKind::MixLN,   TopologyKind::PeriLN,
                             TopologyKind::LNScaling};

}  // namespace

TEST_CASE("finite_diff scalar cases") {
  const ScalarFunction<double> square = [](const Vector& x) { return x(0) * x(0); };
  Vector x(1);
  x << 3.0;
  CHECK(std::abs(finite_diff(square, x, 1e-5)(0) - 6.0) < 1e-8);

  const ScalarFunction<double> constant = [](const Vector&) { return 4.25; };
  CHECK(finite_diff(constant, Vector(Vector::Random(5)), 1e-5).isZero(0.0));

  const ScalarFunction<double> bad = [](const Vector& v) {
    return v(1) > 0.5 ? std::numeric_limits<double>::quiet_NaN() : v(0);
  };
  Vector y(2);
  y << 0.0, 0.5;
  CHECK_THROWS_AS(finite_diff(bad, y, 1e-3), NumericError);
  CHECK_THROWS_AS(finite_diff(square, x, 0.0), ContractError);
}

TEST_CASE("central differences converge quadratically") {
  const ScalarFunction<double> f = [](const Vector& v) { return std::exp(v(0)) * std::sin(v(0)); };
  Vector x(1);
  x << 0.7;
  const double exact = std::exp(0.7) * (std::sin(0.7) + std::cos(0.7));
  const double e1 = std::abs(finite_diff(f, x, 1e-2)(0) - exact);
  const double e2 = std::abs(finite_diff(f, x, 5e-3)(0) - exact);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("relative_error uses the floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 1e-12) == doctest::Approx(1e-4));
}

TEST_CASE("check_model passes for every topology") {
  for (const auto kind : kAll) {
    CAPTURE(to_string(kind));
    const GradCheckReport r = check_model(tiny(kind), 1e-4);
    CHECK(r.pass);
    CHECK(r.max_relative < 1e-4);
    for (const auto& g : r.groups) CHECK(g.pass == (g.max_relative < 1e-4));
  }
}

TEST_CASE("64-bit oracle agrees to its cancellation floor; extended oracle is tighter") {
  GradCheckOptions options;
  options.oracle = OraclePrecision::Double;
  const GradCheckReport coarse = check_model(tiny(TopologyKind::SpanNorm), 1e-3, options);
  const GradCheckReport fine = check_model(tiny(TopologyKind::SpanNorm), 1e-4);
  CHECK(coarse.pass);
  CHECK(fine.pass);
  CHECK(fine.max_relative < coarse.max_relative);
}

TEST_CASE("check_model catches a sign flip on the W_2 gradient") {
  GradCheckOptions options;
  options.corrupt_gradients = [](ModelParams& g) { g.blocks[1].w2 *= -1.0; };
  const GradCheckReport r = check_model(tiny(TopologyKind::SpanNorm), 1e-4, options);
  CHECK_FALSE(r.pass);
  bool w2_failed = false;
  for (const auto& g : r.groups) {
    if (g.name == "block2.w2") w2_failed = !g.pass;
    else CHECK(g.pass);
  }
  CHECK(w2_failed);
}

TEST_CASE("check_model is deterministic") {
  const GradCheckReport a = check_model(tiny(TopologyKind::PeriLN), 1e-4);
  const GradCheckReport b = check_model(tiny(TopologyKind::PeriLN), 1e-4);
  REQUIRE(a.groups.size() == b.groups.size());
  for (std::size_t i = 0; i < a.groups.size(); ++i) {
    CHECK(a.groups[i].name == b.groups[i].name);
    CHECK(a.groups[i].max_relative == b.groups[i].max_relative);
    CHECK(a.groups[i].worst_index == b.groups[i].worst_index);
  }
}

TEST_CASE("central and forward differences agree on a SpanNorm model") {
  using Wide = long double;
  const ModelConfig c = tiny(TopologyKind::SpanNorm);
  const auto params = cast_params<Wide>(init_model(c));
  const auto [tokens, targets] = random_token_batch(c.vocab, 1, 4, 7);
  const auto f = model_loss_function(c, params, tokens, targets);
  const VectorX<Wide> theta = flatten(params);
  const VectorX<Wide> central = finite_diff<Wide>(f, theta, 1e-5L);
  const VectorX<Wide> forward = forward_diff<Wide>(f, theta, 1e-8L);
  const double scale = static_cast<double>(central.cwiseAbs().maxCoeff());
  CHECK(static_cast<double>((central - forward).cwiseAbs().maxCoeff()) < 1e-5 * scale);

  const ModelOutput fwd = model_forward(c, init_model(c), tokens);
  const LossOutput loss = cross_entropy(fwd.logits, targets);
  const Vector analytic = flatten(model_backward(c, init_model(c), fwd.cache, loss.grad_logits).params);
  CHECK((analytic - central.cast<double>()).cwiseAbs().maxCoeff() < 1e-8 * scale + 1e-10);
}
