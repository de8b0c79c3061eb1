#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace proxbridge {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Derives the seed of stream `stream` from `master`. Distinct streams of the
/// same master never collide for stream < 2^32.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Seed for replication `rep` of sample-size cell `cell` of a study.
std::uint64_t replication_seed(std::uint64_t master, std::size_t cell, std::size_t rep);

/// Random source with platform-independent transforms. The engine
/// (mt19937_64) is fully specified by the standard; the uniform, normal and
/// categorical transforms are implemented here so seeded output is
/// bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Marsaglia polar method).
  double normal();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Index drawn from unnormalized nonnegative weights by inverse CDF.
  int categorical(std::span<const double> probs);
  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace proxbridge
