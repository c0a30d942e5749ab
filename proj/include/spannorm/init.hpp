#pragma once

#include "spannorm/rng.hpp"
#include "spannorm/tensor.hpp"

namespace spannorm {

enum class InitKind { Global, Scaled };

// Global: every matrix ~ N(0, base_std^2).
// Scaled: output projections (W_O, W_2) ~ N(0, base_std^2 / depth), the rest as Global.
struct InitStrategy {
  InitKind kind = InitKind::Scaled;
  double base_std = 0.02;
  int depth = 1;
};

enum class InitRole { Standard, ScaledOutput };

double init_std(const InitStrategy& strategy, InitRole role);

Matrix init_matrix(Index rows, Index cols, const InitStrategy& strategy, InitRole role,
                   SeededRng& rng);

const char* to_string(InitKind kind);
InitKind parse_init_kind(const std::string& text);

}  // namespace spannorm
