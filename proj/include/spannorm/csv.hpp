#pragma once

#include <string>
#include <vector>

#include "spannorm/experiments.hpp"
#include "spannorm/spectral.hpp"

namespace spannorm {

/// Minimal CSV table: a fixed header and rows of already formatted cells.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row);
  std::string to_string() const;
  void save(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string cell(double value);
std::string cell(long long value);
std::string cell(int value);
std::string cell(bool value);

/// Rows whose step is a multiple of `every`, plus the last row.
CsvTable runlog_table(const RunLog& log, int every);
/// Header: layer,var,sigma_a,sigma_z,gnorm_act,gnorm_w2. Row l = 1 .. L+1
/// describes X'_l; sigma and W_2 columns belong to the block fed by X'_l.
CsvTable trace_table(const PropagationTrace& trace);
CsvTable depth_stress_table(const std::vector<DepthStressRow>& rows);
CsvTable lr_sweep_table(const std::vector<GradProfile>& profiles);
CsvTable similarity_table(const SimilarityMatrix& sim);

}  // namespace spannorm
