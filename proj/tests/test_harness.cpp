#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "spannorm/checkpoint.hpp"
#include "spannorm/csv.hpp"
#include "spannorm/errors.hpp"
#include "spannorm/experiments.hpp"
#include "spannorm/kv_config.hpp"
#include "spannorm/optim.hpp"
#include "spannorm/tasks.hpp"
#include "spannorm/train.hpp"

using namespace spannorm;
namespace fs = std::filesystem;

namespace {

TrainConfig small_run(TopologyKind kind = TopologyKind::SpanNorm) {
  TrainConfig c;
  c.model.layers = 2;
  c.model.width = 16;
  c.model.heads = 2;
  c.model.ffn = 32;
  c.model.vocab = 12;
  c.model.seq = 9;
  c.model.topology.kind = kind;
  c.model.init = {InitKind::Scaled, 0.1, 1};
  c.model.seed = 11;
  c.peak_lr = 3e-3;
  c.min_lr = 3e-4;
  c.warmup_steps = 3;
  c.total_steps = 12;
  c.batch_tokens = 36;
  c.seed = 5;
  c.log_every = 4;
  return c;
}

// A model holding one weight scalar.
ModelParams scalar_params(double value) {
  ModelParams p;
  p.blocks.resize(1);
  p.blocks[0].wq = Matrix::Constant(1, 1, value);
  return p;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("spannorm_test_" + name); }

}  // namespace

TEST_CASE("lr_at schedule") {
  TrainConfig c;
  c.warmup_steps = 200;
  c.total_steps = 1000;
  c.peak_lr = 2e-4;
  c.min_lr = 2e-5;
  CHECK(lr_at(0, c) == 0.0);
  CHECK(lr_at(100, c) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(200, c) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(lr_at(1000, c) == doctest::Approx(2e-5).epsilon(1e-12));
  CHECK(lr_at(600, c) == doctest::Approx(2e-5 + 0.5 * (2e-4 - 2e-5)).epsilon(1e-12));
  CHECK(std::abs(lr_at(201, c) - lr_at(199, c)) < 3e-6);
  CHECK_THROWS_AS(lr_at(-1, c), ContractError);
  CHECK_THROWS_AS(lr_at(1001, c), ContractError);
}

TEST_CASE("adamw_step decay-only and clipping") {
  ModelParams p = scalar_params(2.0);
  OptimizerState s = OptimizerState::zeros_for(p);
  AdamWConfig cfg;
  StepReport r = adamw_step(p, scalar_params(0.0), s, 1e-3, cfg);
  CHECK(r.applied);
  CHECK(p.blocks[0].wq(0, 0) == doctest::Approx(2.0 * (1 - 1e-4)).epsilon(1e-15));

  ModelParams q;
  q.blocks.resize(1);
  q.blocks[0].wq = Matrix::Zero(1, 2);
  ModelParams g = q;
  g.blocks[0].wq << 6.0, 8.0;
  OptimizerState s2 = OptimizerState::zeros_for(q);
  r = adamw_step(q, g, s2, 1e-3, cfg);
  CHECK(r.grad_norm == doctest::Approx(10.0));
  CHECK(r.clip_scale == doctest::Approx(0.1));
  CHECK(s2.m.blocks[0].wq(0, 0) == doctest::Approx(0.1 * 0.6));
  CHECK(s2.m.blocks[0].wq(0, 1) == doctest::Approx(0.1 * 0.8));
}

TEST_CASE("adamw_step matches a scalar reference") {
  auto reference = [](double theta, const std::vector<double>& grads, double lr, double b1,
                      double b2, double eps, double wd) {
    double m = 0, v = 0;
    for (std::size_t t = 1; t <= grads.size(); ++t) {
      const double g = grads[t - 1];
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      theta -= lr * wd * theta;
      theta -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    }
    return theta;
  };
  for (const double wd : {0.1, 0.0}) {
    ModelParams p = scalar_params(0.7);
    OptimizerState s = OptimizerState::zeros_for(p);
    AdamWConfig cfg;
    cfg.weight_decay = wd;
    cfg.clip_norm = std::numeric_limits<double>::infinity();
    adamw_step(p, scalar_params(0.3), s, 1e-2, cfg);
    adamw_step(p, scalar_params(-1.7), s, 1e-2, cfg);
    CHECK(std::abs(p.blocks[0].wq(0, 0) - reference(0.7, {0.3, -1.7}, 1e-2, 0.9, 0.95, 1e-8, wd)) < 1e-12);
    CHECK(s.step == 2);
  }
}

TEST_CASE("adamw_step exempts norms and embeddings from decay") {
  ModelParams p;
  p.tok_emb = Matrix::Constant(2, 2, 1.0);
  p.final_ln = {Vector::Constant(2, 1.0), Vector::Constant(2, 1.0)};
  const ModelParams before = p;
  OptimizerState s = OptimizerState::zeros_for(p);
  adamw_step(p, zeros_like(p), s, 1e-1, AdamWConfig{});
  CHECK(flatten(p) == flatten(before));
}

TEST_CASE("adamw_step aborts on non-finite gradients") {
  ModelParams p = scalar_params(1.0);
  OptimizerState s = OptimizerState::zeros_for(p);
  const StepReport r = adamw_step(p, scalar_params(std::numeric_limits<double>::quiet_NaN()), s, 1e-3, {});
  CHECK_FALSE(r.applied);
  CHECK(p.blocks[0].wq(0, 0) == 1.0);
  CHECK(s.step == 0);
  CHECK_THROWS_AS(adamw_step(p, ModelParams{}, s, 1e-3, {}), DimensionError);
}

TEST_CASE("copy task layout") {
  TaskSpec spec;
  const Batch b = make_task_batch(spec, 3, 64, 9, 20);
  CHECK(b.tokens.rows() == 7);
  CHECK(b.tokens.cols() == 9);
  for (Index r = 0; r < b.tokens.rows(); ++r) {
    CHECK(b.tokens(r, 4) == 0);
    for (int j = 0; j < 4; ++j) {
      CHECK(b.tokens(r, j) >= 1);
      CHECK(b.tokens(r, j) < 20);
      CHECK(b.tokens(r, 5 + j) == b.tokens(r, j));
      CHECK(b.targets(r, j) == -1);
      CHECK(b.targets(r, 4 + j) == b.tokens(r, j));
    }
    CHECK(b.targets(r, 8) == -1);
  }
  const Batch again = make_task_batch(spec, 3, 64, 9, 20);
  CHECK(again.tokens == b.tokens);
  CHECK(again.targets == b.targets);
  CHECK(make_task_batch(spec, 4, 64, 9, 20).tokens != b.tokens);
}

TEST_CASE("modular add task") {
  const Batch one = modular_add_example(40, 60, 97);
  CHECK(one.tokens(0, 3) == 3);
  CHECK(one.tokens(0, 2) == 97);
  CHECK(one.targets(0, 2) == 3);
  CHECK(one.targets(0, 0) == -1);
  CHECK_THROWS_AS(modular_add_example(97, 1, 97), InputError);

  TaskSpec spec{TaskKind::ModularAdd, 13, {}};
  const Batch b = make_task_batch(spec, 1, 40, 4, 14);
  for (Index r = 0; r < b.tokens.rows(); ++r)
    CHECK(b.tokens(r, 3) == (b.tokens(r, 0) + b.tokens(r, 1)) % 13);
  CHECK_THROWS_AS(make_task_batch(spec, 1, 40, 4, 13), ConfigError);
}

TEST_CASE("char LM task") {
  const fs::path path = temp_file("corpus.txt");
  {
    std::ofstream out(path);
    out << "abracadabra abracadabra";
  }
  TaskSpec spec{TaskKind::CharLM, 97, path.string()};
  const Batch b = make_task_batch(spec, 2, 24, 6, 16);
  for (Index r = 0; r < b.tokens.rows(); ++r)
    for (int j = 0; j + 1 < 6; ++j) CHECK(b.targets(r, j) == b.tokens(r, j + 1));
  CHECK_THROWS_AS(make_task_batch(spec, 2, 24, 6, 3), ConfigError);
  CHECK_THROWS_AS(make_task_batch(spec, 2, 24, 40, 16), InputError);
  fs::remove(path);
  CHECK_THROWS_AS(make_task_batch(spec, 2, 24, 6, 16), IoError);
}

TEST_CASE("key-value config parsing") {
  const KeyValueConfig kv = KeyValueConfig::parse(
      "# comment\ntop = 1\n[model]\nlayers = 4\n ; another\n  width=32  \n[train]\npeak_lr = 2e-4\n");
  CHECK(kv.find("top") == std::optional<std::string>("1"));
  CHECK(kv.find("model.layers") == std::optional<std::string>("4"));
  CHECK(kv.find("model.width") == std::optional<std::string>("32"));
  CHECK_FALSE(kv.has("train.missing"));
  CHECK_THROWS_AS(KeyValueConfig::parse("[model]\na = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("[broken\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/spannorm.cfg"), IoError);

  CHECK(parse_double("k", "2.5e-3") == 2.5e-3);
  CHECK_THROWS_AS(parse_double("k", "2.5x"), ConfigError);
  CHECK(parse_integer("k", "-12") == -12);
  CHECK_THROWS_AS(parse_integer("k", "1.5"), ConfigError);
  for (const double v : {0.1, 1.0 / 3.0, 6.02e23, -1e-300}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("train config round trip and validation") {
  TrainConfig c = small_run(TopologyKind::MixLN);
  c.model.topology.post_fraction = 0.375;
  c.task = {TaskKind::ModularAdd, 7, {}};
  c.peak_lr = 1.0 / 3.0;
  const TrainConfig back = train_config_from(to_key_values(c));
  CHECK(to_key_values(back).to_text() == to_key_values(c).to_text());
  CHECK(back.peak_lr == c.peak_lr);
  CHECK(back.model.topology.post_fraction == 0.375);
  CHECK(back.task.kind == TaskKind::ModularAdd);

  CHECK_THROWS_AS(train_config_from(KeyValueConfig::parse("[train]\nbogus = 1\n")), ConfigError);
  CHECK_THROWS_AS(train_config_from(KeyValueConfig::parse("[model]\ntopology = sideways\n")), ConfigError);
  TrainConfig bad = c;
  bad.warmup_steps = bad.total_steps + 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.min_lr = 2 * bad.peak_lr;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train with zero steps returns the initialization") {
  TrainConfig c = small_run();
  c.total_steps = 0;
  c.warmup_steps = 0;
  const TrainResult r = train(c);
  CHECK(r.log.rows.empty());
  CHECK(flatten(r.checkpoint.params) == flatten(init_model(c.model)));
  CHECK(r.checkpoint.step == 0);
}

TEST_CASE("train is deterministic and logs monotone steps") {
  const TrainConfig c = small_run();
  const TrainResult a = train(c);
  const TrainResult b = train(c);
  REQUIRE(a.log.rows.size() == 12);
  REQUIRE(b.log.rows.size() == 12);
  for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
    CHECK(a.log.rows[i].step == static_cast<int>(i + 1));
    CHECK(a.log.rows[i].loss == b.log.rows[i].loss);
    CHECK(a.log.rows[i].smoothed == b.log.rows[i].smoothed);
    CHECK(a.log.rows[i].grad_norm == b.log.rows[i].grad_norm);
    CHECK(a.log.rows[i].lr == b.log.rows[i].lr);
  }
  CHECK(flatten(a.checkpoint.params) == flatten(b.checkpoint.params));
  CHECK(a.log.rows[1].smoothed ==
        doctest::Approx(0.99 * a.log.rows[0].loss + 0.01 * a.log.rows[1].loss).epsilon(1e-15));
  CHECK_FALSE(a.log.diverged);
  std::vector<int> trace_steps;
  for (const auto& t : a.log.traces) trace_steps.push_back(t.step);
  CHECK(trace_steps == std::vector<int>{1, 4, 8, 12});
  CHECK(a.checkpoint.rng.next_index == 12);
}

TEST_CASE("a huge learning rate halts the run as diverged") {
  TrainConfig c = small_run(TopologyKind::PreNorm);
  c.peak_lr = 1e300;
  c.min_lr = 1e299;
  c.warmup_steps = 0;
  const TrainResult r = train(c);
  CHECK(r.log.diverged);
  CHECK(r.log.divergence_step > 1);
  CHECK(r.log.rows.back().step == r.log.divergence_step);
  CHECK(std::isfinite(r.log.final_smoothed()));
}

TEST_CASE("checkpoint round trip is bit identical") {
  const TrainConfig c = small_run(TopologyKind::HybridNorm);
  const TrainResult r = train(c);
  const fs::path path = temp_file("ckpt.bin");
  save_checkpoint(path.string(), r.checkpoint);
  const Checkpoint back = load_checkpoint(path.string());
  CHECK(flatten(back.params) == flatten(r.checkpoint.params));
  CHECK(back.step == r.checkpoint.step);
  CHECK(back.rng.seed == r.checkpoint.rng.seed);
  CHECK(back.rng.next_index == r.checkpoint.rng.next_index);
  CHECK(to_key_values(back.config).to_text() == to_key_values(c).to_text());

  const Batch batch = TaskSource(c.task, c.model.vocab, c.model.seq).batch(c.seed, 99, c.batch_tokens);
  CHECK(model_forward(back.config.model, back.params, batch.tokens).logits ==
        model_forward(c.model, r.checkpoint.params, batch.tokens).logits);

  const fs::path copy = temp_file("ckpt_copy.bin");
  save_checkpoint(copy.string(), back);
  std::ifstream a(path, std::ios::binary), b(copy, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
  CHECK(bytes_a == bytes_b);

  {
    std::ofstream trailing(copy, std::ios::binary | std::ios::app);
    trailing << 'x';
  }
  CHECK_THROWS_AS(load_checkpoint(copy.string()), IoError);
  {
    std::ofstream truncated(copy, std::ios::binary | std::ios::trunc);
    truncated << bytes_a.substr(0, bytes_a.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(copy.string()), IoError);
  {
    std::ofstream wrong(copy, std::ios::binary | std::ios::trunc);
    wrong << "NOTACKPT" << bytes_a.substr(8);
  }
  CHECK_THROWS_AS(load_checkpoint(copy.string()), IoError);
  fs::remove(path);
  fs::remove(copy);
}

TEST_CASE("activation dump round trip") {
  const std::vector<Matrix> acts = {Matrix::Random(3, 4), Matrix::Random(3, 4)};
  const fs::path path = temp_file("acts.bin");
  save_activations(path.string(), acts);
  const std::vector<Matrix> back = load_activations(path.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0] == acts[0]);
  CHECK(back[1] == acts[1]);
  fs::remove(path);
  CHECK_THROWS_AS(save_activations(path.string(), {Matrix::Random(3, 4), Matrix::Random(2, 4)}),
                  DimensionError);
}

TEST_CASE("experiment drivers") {
  TrainConfig c = small_run();
  c.total_steps = 4;
  const auto rows = depth_stress(c, {1, 2});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].depth == 1);
  const auto again = depth_stress(c, {1, 2});
  CHECK(rows[1].final_smoothed == again[1].final_smoothed);

  std::vector<DepthStressRow> synthetic(3);
  synthetic[0].final_smoothed = 3;
  synthetic[1].final_smoothed = 2;
  synthetic[2].final_smoothed = 1;
  CHECK(strictly_improves_with_depth(synthetic));
  synthetic[2].final_smoothed = 2;
  CHECK_FALSE(strictly_improves_with_depth(synthetic));
  synthetic[2].final_smoothed = 1;
  synthetic[1].diverged = true;
  CHECK_FALSE(strictly_improves_with_depth(synthetic));

  c.model.layers = 1;
  const auto profiles = lr_sweep_gradprofile(c, {1e-3, 2e-3});
  REQUIRE(profiles.size() == 2);
  CHECK(profiles[1].lr == 2e-3);
  CHECK(profiles[0].gnorm_w2.size() == 1);
  CHECK(profiles[0].gnorm_w2[0] > 0.0);
}

TEST_CASE("csv output") {
  CsvTable t({"a", "b"});
  t.add({"1", "x"});
  CHECK(t.to_string() == "a,b\n1,x\n");
  CHECK_THROWS(t.add({"1"}));
  CHECK(cell(true) == "1");
  CHECK(cell(3) == "3");
  CHECK(std::stod(cell(0.1)) == 0.1);

  PropagationTrace trace;
  trace.layers = 1;
  trace.var = {1.0, 2.0};
  trace.sigma_a = {0.5};
  trace.sigma_z = {0.7};
  trace.gnorm_act = {3.0, 4.0};
  trace.gnorm_w2 = {0.25};
  const std::string text = trace_table(trace).to_string();
  CHECK(text.rfind("layer,var,sigma_a,sigma_z,gnorm_act,gnorm_w2\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}
