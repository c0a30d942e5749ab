#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spannorm/params.hpp"
#include "spannorm/train_config.hpp"

namespace spannorm {

/// Data-stream position: batches are drawn from SeededRng(seed, 1000 + index).
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t next_index = 0;
};

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  std::uint64_t step = 0;
  RngState rng;
};

/// Little-endian layout: magic "SPNCKPT\0", u32 version, u64-length-prefixed
/// UTF-8 config text, u64 step, u64 rng seed, u64 rng index, u32 manifest
/// length, per tensor {u32 name length, name, u8 kind, u64 count}, then the
/// float64 arrays in manifest order.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

/// Per-layer activations (all the same shape) for similarity analysis.
/// Layout: magic "SPNACTS\0", u32 version, u32 count, u64 rows, u64 cols,
/// then the float64 matrices in row-major order.
void save_activations(const std::string& path, const std::vector<Matrix>& activations);
std::vector<Matrix> load_activations(const std::string& path);

}  // namespace spannorm
