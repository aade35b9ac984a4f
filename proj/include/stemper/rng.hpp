#pragma once

#include <cstdint>
#include <random>

#include "stemper/common.hpp"

namespace stemper {

/// SplitMix64 finalizer; used to derive independent stream seeds from
/// (seed, stream-id) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seedable 64-bit generator. Every consumer that needs reproducible
/// parallel streams constructs one per (seed, stream) pair.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double normal();
  Vector normal_vector(int dim);
  /// Uniform on {0, ..., n-1}.
  int index(int n);
  /// Gamma(shape, 1) draw.
  double gamma(double shape);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace stemper
