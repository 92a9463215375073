#include "trlab/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace trlab {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::string_view label)
    : master_seed_(master_seed), label_(label) {
  const std::uint64_t k = splitmix64(master_seed ^ splitmix64(fnv1a64(label)));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

void RngStream::refill() {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u};
  block_ = philox4x32_10(ctr, key_);
  ++counter_;
  block_pos_ = 0;
}

std::uint32_t RngStream::next_u32() {
  if (block_pos_ >= 4) refill();
  return block_[block_pos_++];
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t hi = next_u32();
  const std::uint64_t lo = next_u32();
  return (hi << 32) | lo;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("RngStream::below requires n > 0");
  // Rejection sampling on the largest multiple of n.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % n;
  }
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

RngStream RngStream::derive(std::string_view sub) const {
  std::string child = label_;
  child += '/';
  child += sub;
  return RngStream(master_seed_, child);
}

TensorF rng_normal(RngStream& stream, double mean, double std, const Shape& shape) {
  if (!(std >= 0.0)) throw InvalidArgument("rng_normal: negative std");
  TensorF out(shape);
  for (auto& v : out.data()) {
    const double z = stream.normal();
    v = std == 0.0 ? static_cast<float>(mean) : static_cast<float>(mean + std * z);
  }
  return out;
}

TensorF rng_truncated_normal(RngStream& stream, double std, const Shape& shape) {
  if (!(std >= 0.0)) throw InvalidArgument("rng_truncated_normal: negative std");
  TensorF out(shape);
  for (auto& v : out.data()) {
    double z;
    do {
      z = stream.normal();
    } while (std::abs(z) > 2.0);
    v = static_cast<float>(std * z);
  }
  return out;
}

TensorF rng_uniform(RngStream& stream, double lo, double hi, const Shape& shape) {
  TensorF out(shape);
  for (auto& v : out.data()) v = static_cast<float>(lo + (hi - lo) * stream.uniform());
  return out;
}

std::vector<std::size_t> rng_permutation(RngStream& stream, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace trlab
