#pragma once

#include <array>
#include <cstdint>

namespace spannorm {

/// Portable random stream keyed by (seed, stream id). The generator is
/// xoshiro256** seeded through SplitMix64, and normals come from Box-Muller,
/// so draw sequences do not depend on the standard library implementation.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  // Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace spannorm
