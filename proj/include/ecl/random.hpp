#pragma once

#include <cstdint>
#include <random>

namespace ecl {

// Mixes a base seed with a stream index (splitmix64 finalizer) so that
// independent consumers of one user-facing seed get decorrelated engines.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Seeded generator with platform-independent transforms. The std
// distributions are implementation-defined, so uniform and normal draws
// are computed directly from the 64-bit engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1).
  double uniform();
  // Uniform on the open interval (0, 1).
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ecl
