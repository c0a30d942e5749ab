#include "spannorm/csv.hpp"

#include <fstream>
#include <sstream>

#include "spannorm/errors.hpp"
#include "spannorm/kv_config.hpp"

namespace spannorm {

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header_.size()) {
    throw ContractError("CsvTable: row has " + std::to_string(row.size()) + " cells, header has " +
                        std::to_string(header_.size()));
  }
  rows_.push_back(std::move(row));
}

std::string CsvTable::to_string() const {
  std::ostringstream out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out.str();
}

void CsvTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << to_string();
  if (!out) throw IoError("write failed on " + path);
}

std::string cell(double value) { return format_double(value); }
std::string cell(long long value) { return std::to_string(value); }
std::string cell(int value) { return std::to_string(value); }
std::string cell(bool value) { return value ? "1" : "0"; }

CsvTable runlog_table(const RunLog& log, int every) {
  CsvTable t({"step", "loss", "smoothed", "lr", "grad_norm", "skipped", "diverged"});
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    const auto& r = log.rows[i];
    if (r.step % every != 0 && i + 1 != log.rows.size()) continue;
    const bool diverged = log.diverged && r.step == log.divergence_step;
    t.add({cell(r.step), cell(r.loss), cell(r.smoothed), cell(r.lr), cell(r.grad_norm),
           cell(r.skipped), cell(diverged)});
  }
  return t;
}

CsvTable trace_table(const PropagationTrace& trace) {
  CsvTable t({"layer", "var", "sigma_a", "sigma_z", "gnorm_act", "gnorm_w2"});
  const std::size_t rows = static_cast<std::size_t>(trace.layers) + 1;
  auto at = [](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? cell(v[i]) : std::string();
  };
  for (std::size_t i = 0; i < rows; ++i) {
    t.add({cell(static_cast<int>(i + 1)), at(trace.var, i), at(trace.sigma_a, i),
           at(trace.sigma_z, i), at(trace.gnorm_act, i), at(trace.gnorm_w2, i)});
  }
  return t;
}

CsvTable depth_stress_table(const std::vector<DepthStressRow>& rows) {
  CsvTable t({"depth", "final_smoothed", "final_loss", "diverged", "divergence_step"});
  for (const auto& r : rows) {
    t.add({cell(r.depth), cell(r.final_smoothed), cell(r.final_loss), cell(r.diverged),
           cell(r.divergence_step)});
  }
  return t;
}

CsvTable lr_sweep_table(const std::vector<GradProfile>& profiles) {
  CsvTable t({"lr", "layer", "gnorm_w2", "diverged", "final_smoothed"});
  for (const auto& p : profiles) {
    for (std::size_t l = 0; l < p.gnorm_w2.size(); ++l) {
      t.add({cell(p.lr), cell(static_cast<int>(l + 1)), cell(p.gnorm_w2[l]), cell(p.diverged),
             cell(p.final_smoothed)});
    }
  }
  return t;
}

CsvTable similarity_table(const SimilarityMatrix& sim) {
  CsvTable t({"kind", "i", "j", "value"});
  for (Index i = 0; i < sim.mean_cosine.rows(); ++i) {
    for (Index j = 0; j < sim.mean_cosine.cols(); ++j) {
      t.add({"pair", cell(static_cast<int>(i + 1)), cell(static_cast<int>(j + 1)),
             cell(sim.mean_cosine(i, j))});
    }
  }
  for (Index k = 0; k < sim.by_distance.size(); ++k) {
    t.add({"distance", cell(static_cast<int>(k)), "", cell(sim.by_distance[k])});
  }
  return t;
}

}  // namespace spannorm
