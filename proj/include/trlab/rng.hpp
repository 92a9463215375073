#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trlab/tensor.hpp"

namespace trlab {

/// 64-bit FNV-1a; used for label hashing and content fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);
std::string hex64(std::uint64_t v);

/// Counter-based stream (Philox4x32-10) keyed by (master_seed, label).
/// Identical (seed, label) pairs produce identical sequences everywhere;
/// a stream is not thread-safe, distinct streams are independent.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view label);

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  const std::string& label() const noexcept { return label_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1).
  double uniform_open();
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// Child stream with label "<label>/<sub>" under the same master seed.
  RngStream derive(std::string_view sub) const;

 private:
  void refill();

  std::uint64_t master_seed_;
  std::string label_;
  std::array<std::uint32_t, 2> key_{};
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int block_pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline RngStream rng_derive(std::uint64_t master_seed, std::string_view label) {
  return RngStream(master_seed, label);
}

/// iid N(mean, std^2) draws; std == 0 gives exactly `mean`.
TensorF rng_normal(RngStream& stream, double mean, double std, const Shape& shape);
/// N(0, std^2) resampled until |x| <= 2 std.
TensorF rng_truncated_normal(RngStream& stream, double std, const Shape& shape);
TensorF rng_uniform(RngStream& stream, double lo, double hi, const Shape& shape);
/// Uniform random permutation of 0..n-1 (Fisher-Yates).
std::vector<std::size_t> rng_permutation(RngStream& stream, std::size_t n);

}  // namespace trlab
