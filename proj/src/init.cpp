#include "spannorm/init.hpp"

#include <cmath>

namespace spannorm {

double init_std(const InitStrategy& strategy, InitRole role) {
  if (!(strategy.base_std > 0.0)) throw ConfigError("init: base_std must be positive");
  if (strategy.kind == InitKind::Scaled && strategy.depth < 1) {
    throw ConfigError("init: scaled init needs depth >= 1");
  }
  if (strategy.kind == InitKind::Scaled && role == InitRole::ScaledOutput) {
    return strategy.base_std / std::sqrt(static_cast<double>(strategy.depth));
  }
  return strategy.base_std;
}

Matrix init_matrix(Index rows, Index cols, const InitStrategy& strategy, InitRole role,
                   SeededRng& rng) {
  const double std_dev = init_std(strategy, role);
  Matrix m(rows, cols);
  // Fill in storage order so the draw sequence is independent of Eigen internals.
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = std_dev * rng.normal();
  return m;
}

const char* to_string(InitKind kind) { return kind == InitKind::Global ? "global" : "scaled"; }

InitKind parse_init_kind(const std::string& text) {
  if (text == "global") return InitKind::Global;
  if (text == "scaled") return InitKind::Scaled;
  throw ConfigError("unknown init kind '" + text + "'");
}

}  // namespace spannorm
