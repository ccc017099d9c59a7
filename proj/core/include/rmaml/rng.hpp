#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rmaml {

/// Mixes a base seed with a sequence of tags into an independent stream seed.
/// Used to give every (epoch, batch, task, stage) its own reproducible stream
/// so results do not depend on evaluation order or thread count.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Thin wrapper over std::mt19937_64 with platform-independent distributions.
/// The standard library distributions are implementation-defined, so they are
/// avoided wherever results must reproduce across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi].
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, no cached second variate).
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace rmaml
