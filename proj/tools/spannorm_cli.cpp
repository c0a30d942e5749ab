// Command-line front end: training, gradient checks and the diagnostics.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>

#include "spannorm/csv.hpp"
#include "spannorm/dynamics.hpp"
#include "spannorm/errors.hpp"
#include "spannorm/experiments.hpp"
#include "spannorm/gradcheck.hpp"
#include "spannorm/spectral.hpp"
#include "spannorm/train.hpp"

namespace fs = std::filesystem;
using namespace spannorm;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "key = value file with [model] and [train] sections");
  cmd->add_option("--seed", common.seed, "overrides model.seed and train.seed");
  cmd->add_option("--out", common.out, "output directory");
}

TrainConfig resolve(const Common& common) {
  TrainConfig config;
  if (!common.config_path.empty()) {
    config = train_config_from(KeyValueConfig::load(common.config_path));
  }
  if (common.seed) {
    config.seed = *common.seed;
    config.model.seed = *common.seed;
  }
  config.validate();
  return config;
}

std::string out_file(const Common& common, const std::string& name) {
  std::error_code ec;
  fs::create_directories(common.out, ec);
  if (ec) throw IoError("cannot create output directory " + common.out + ": " + ec.message());
  return (fs::path(common.out) / name).string();
}

void progress(const RunLogRow& row, int every) {
  if (row.step % every == 0 || !std::isfinite(row.loss)) {
    std::cerr << "step " << row.step << "  loss " << row.loss << "  smoothed " << row.smoothed
              << "  lr " << row.lr << "  |g| " << row.grad_norm << '\n';
  }
}

void run_train(const Common& common) {
  const TrainConfig config = resolve(common);
  const TrainResult result =
      train(config, [&](const RunLogRow& row) { progress(row, config.log_every); });
  runlog_table(result.log, config.log_every).save(out_file(common, "runlog.csv"));
  if (!result.log.traces.empty()) {
    trace_table(result.log.traces.back().trace).save(out_file(common, "trace.csv"));
  }
  save_checkpoint(out_file(common, "checkpoint.bin"), result.checkpoint);

  const Evaluation ev = evaluate(config, result.checkpoint.params, kHeldOutBatch);
  const Index t = ev.cache.tokens.cols();
  std::vector<Matrix> outputs;
  for (std::size_t l = 1; l < ev.cache.activations.size(); ++l) {
    outputs.push_back(ev.cache.activations[l].topRows(t));
  }
  save_activations(out_file(common, "activations.bin"), outputs);
  if (result.log.diverged) {
    std::cout << "diverged at step " << result.log.divergence_step << '\n';
  } else {
    std::cout << "final smoothed loss " << result.log.final_smoothed() << '\n';
  }
}

void run_gradcheck(const Common& common, const std::string& topology, double tolerance) {
  TrainConfig config = resolve(common);
  ModelConfig model = config.model;
  if (common.config_path.empty()) {
    model.layers = 2;
    model.width = 8;
    model.heads = 2;
    model.ffn = 16;
    model.vocab = 11;
    model.seq = 4;
  }
  CsvTable table({"topology", "group", "max_relative", "max_absolute", "pass"});
  std::vector<TopologyKind> kinds;
  if (topology == "all") {
    kinds.assign(std::begin(kAllTopologies), std::end(kAllTopologies));
  } else {
    kinds.push_back(parse_topology(topology));
  }
  for (const auto kind : kinds) {
    model.topology.kind = kind;
    GradCheckOptions options;
    options.seq_len = model.seq;
    const GradCheckReport report = check_model(model, tolerance, options);
    for (const auto& g : report.groups) {
      table.add({to_string(kind), g.name, cell(g.max_relative), cell(g.max_absolute), cell(g.pass)});
    }
    std::cout << to_string(kind) << ": max relative error " << report.max_relative
              << (report.pass ? "  PASS" : "  FAIL") << '\n';
  }
  table.save(out_file(common, "gradcheck.csv"));
}

void run_trace(const Common& common, Index batch) {
  const TrainConfig config = resolve(common);
  const PropagationTrace trace =
      trace_at_init(config.model, config.model.seed, batch, config.model.seq);
  trace_table(trace).save(out_file(common, "trace.csv"));
  if (trace.truncated) {
    std::cout << "trace truncated at activation " << trace.first_nonfinite << '\n';
  } else {
    const DecayFit fit = fit_decay(trace);
    std::cout << "gradient log-slope " << fit.slope << "  R^2 " << fit.r2 << '\n';
  }
}

void run_decay(const Common& common, double sigma, int depth, int seeds, Index batch) {
  const double post = decay_model(sigma, depth, TopologyKind::PostNorm);
  const double span = decay_model(sigma, depth, TopologyKind::SpanNorm);
  std::cout << "model: post " << post << "  span " << span << "  span/post " << span / post << '\n';
  const TrainConfig config = resolve(common);
  std::vector<std::uint64_t> seed_list;
  for (int s = 0; s < seeds; ++s) seed_list.push_back(config.model.seed + s);
  const DecayComparison cmp = compare_decay(config.model, seed_list, batch, config.model.seq);
  CsvTable table({"sigma", "depth", "post_model", "span_model", "post_slope", "span_slope",
                  "slope_ratio", "post_sigma", "span_sigma"});
  table.add({cell(sigma), cell(depth), cell(post), cell(span), cell(cmp.post_slope),
             cell(cmp.span_slope), cell(cmp.slope_ratio), cell(cmp.post_sigma),
             cell(cmp.span_sigma)});
  table.save(out_file(common, "decay.csv"));
  std::cout << "measured: post slope " << cmp.post_slope << "  span slope " << cmp.span_slope
            << "  ratio " << cmp.slope_ratio << '\n';
}

void run_jspec(const Common& common, std::vector<int> layers, int iterations) {
  const TrainConfig config = resolve(common);
  if (layers.empty()) {
    for (int l = 1; l <= config.model.layers; ++l) layers.push_back(l);
  }
  const auto rows =
      layer_jacobian_norms(config.model, config.model.seed, config.model.seq, iterations, layers);
  CsvTable table({"layer", "jspec", "jspec_minus_identity", "converged"});
  for (const auto& r : rows) {
    table.add({cell(r.layer), cell(r.norm), cell(r.norm_minus_identity), cell(r.converged)});
  }
  table.save(out_file(common, "jspec.csv"));
}

void run_branch_variance(const Common& common, const std::string& init) {
  const TrainConfig config = resolve(common);
  BranchVarianceOptions options;
  options.init = parse_init_kind(init);
  options.width = config.model.width;
  options.ffn = config.model.ffn;
  options.base_std = config.model.init.base_std;
  const BranchVarianceResult result = branch_variance_check(options);
  CsvTable table({"depth", "variance"});
  for (std::size_t i = 0; i < result.depths.size(); ++i) {
    table.add({cell(result.depths[i]), cell(result.variances[i])});
  }
  table.save(out_file(common, "branch_variance.csv"));
  std::cout << "log-log slope " << result.loglog.slope << "  R^2 " << result.loglog.r2 << '\n';
}

void run_spectral(const Common& common, const std::string& checkpoint_path, double eps) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  CsvTable table({"layer", "role", "rows", "cols", "sigma_max", "sigma_min", "hard_rank",
                  "soft_rank", "edr", "condition"});
  auto add = [&](int layer, const std::string& role, const Matrix& m) {
    const SpectralReport r = spectral_report(m, eps);
    table.add({cell(layer), role, cell(static_cast<int>(m.rows())), cell(static_cast<int>(m.cols())),
               cell(r.singular_values[0]), cell(r.singular_values[r.singular_values.size() - 1]),
               cell(r.ranks.hard), cell(r.ranks.soft), cell(r.ranks.edr), cell(r.condition.value)});
  };
  for (std::size_t l = 0; l < ck.params.blocks.size(); ++l) {
    const auto& b = ck.params.blocks[l];
    const int layer = static_cast<int>(l + 1);
    add(layer, "wq", b.wq);
    add(layer, "wk", b.wk);
    add(layer, "wv", b.wv);
    add(layer, "wo", b.wo);
    add(layer, "w1", b.w1);
    add(layer, "w2", b.w2);
  }
  table.save(out_file(common, "spectral.csv"));

  const NormalizedSpectrum emb = eigenspectrum_over_median(ck.params.tok_emb);
  CsvTable spectrum({"rank_fraction", "eigenvalue_over_median"});
  for (Index i = 0; i < emb.normalized.size(); ++i) {
    spectrum.add({cell(emb.rank_fraction[i]), cell(emb.normalized[i])});
  }
  spectrum.save(out_file(common, "embedding_spectrum.csv"));
}

void run_simcos(const Common& common, const std::string& path) {
  const SimilarityMatrix sim = layer_similarity(load_activations(path));
  similarity_table(sim).save(out_file(common, "simcos.csv"));
  std::cout << "excluded tokens " << sim.excluded_tokens << '\n';
}

void run_stress(const Common& common, const std::vector<int>& depths) {
  const TrainConfig config = resolve(common);
  const auto rows = depth_stress(config, depths, [&](const RunLogRow& row) {
    progress(row, config.log_every);
  });
  depth_stress_table(rows).save(out_file(common, "stress.csv"));
  std::cout << (strictly_improves_with_depth(rows) ? "loss strictly decreases with depth"
                                                   : "loss does not strictly decrease with depth")
            << '\n';
}

void run_lr_sweep(const Common& common, const std::vector<double>& lrs) {
  const TrainConfig config = resolve(common);
  const auto profiles = lr_sweep_gradprofile(config, lrs, [&](const RunLogRow& row) {
    progress(row, config.log_every);
  });
  lr_sweep_table(profiles).save(out_file(common, "lrsweep.csv"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tiny transformer engine with pluggable normalization topologies"};
  app.require_subcommand(1);
  Common common;

  auto* train_cmd = app.add_subcommand("train", "train a model; writes runlog.csv, trace.csv, checkpoint.bin");
  add_common(train_cmd, common);

  std::string gc_topology = "all";
  double gc_tolerance = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(gc_cmd, common);
  gc_cmd->add_option("--topology", gc_topology, "topology name or 'all'");
  gc_cmd->add_option("--tolerance", gc_tolerance, "maximum relative error");

  Index batch = 4;
  auto* trace_cmd = app.add_subcommand("trace", "propagation trace at initialization");
  add_common(trace_cmd, common);
  trace_cmd->add_option("--batch", batch, "sequences per batch");

  double sigma = 1.05;
  int depth = 128;
  int seeds = 8;
  auto* decay_cmd = app.add_subcommand("decay", "closed-form and measured gradient decay");
  add_common(decay_cmd, common);
  decay_cmd->add_option("--sigma", sigma, "homogeneous pre-norm std (> 1)");
  decay_cmd->add_option("--depth", depth, "depth for the closed form");
  decay_cmd->add_option("--seeds", seeds, "number of seeds (1..n) for the measured comparison");
  decay_cmd->add_option("--batch", batch, "sequences per batch");

  std::vector<int> layers;
  int iterations = 30;
  auto* jspec_cmd = app.add_subcommand("jspec", "block Jacobian spectral norms at initialization");
  add_common(jspec_cmd, common);
  jspec_cmd->add_option("--layers", layers, "1-based layers (default: all)")->delimiter(',');
  jspec_cmd->add_option("--iterations", iterations, "power iterations");

  std::string init = "scaled";
  auto* bvar_cmd = app.add_subcommand("branch-variance", "FFN branch variance against depth");
  add_common(bvar_cmd, common);
  bvar_cmd->add_option("--init", init, "scaled or global");

  std::string checkpoint_path;
  double eps = 0.01;
  auto* spectral_cmd = app.add_subcommand("spectral", "spectral metrics of a checkpoint's weights");
  add_common(spectral_cmd, common);
  spectral_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint.bin")->required();
  spectral_cmd->add_option("--eps", eps, "hard-rank threshold relative to sigma_max");

  std::string activations_path;
  auto* simcos_cmd = app.add_subcommand("simcos", "layer-pair cosine similarity of an activation dump");
  add_common(simcos_cmd, common);
  simcos_cmd->add_option("--activations", activations_path, "activations.bin")->required();

  std::vector<int> depths{8, 16, 32, 64};
  auto* stress_cmd = app.add_subcommand("stress-depth", "train at several depths with a fixed lr");
  add_common(stress_cmd, common);
  stress_cmd->add_option("--depths", depths, "depths to train")->delimiter(',');

  std::vector<double> lrs{1e-3, 3e-3, 1e-2};
  auto* sweep_cmd = app.add_subcommand("lr-sweep", "per-layer W_2 gradient norms across peak lrs");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--lrs", lrs, "peak learning rates")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) run_train(common);
    else if (*gc_cmd) run_gradcheck(common, gc_topology, gc_tolerance);
    else if (*trace_cmd) run_trace(common, batch);
    else if (*decay_cmd) run_decay(common, sigma, depth, seeds, batch);
    else if (*jspec_cmd) run_jspec(common, layers, iterations);
    else if (*bvar_cmd) run_branch_variance(common, init);
    else if (*spectral_cmd) run_spectral(common, checkpoint_path, eps);
    else if (*simcos_cmd) run_simcos(common, activations_path);
    else if (*stress_cmd) run_stress(common, depths);
    else if (*sweep_cmd) run_lr_sweep(common, lrs);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
