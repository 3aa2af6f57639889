#pragma once

#include <array>
#include <cstdint>

namespace stewart {

// Counter-based pseudo-random generator (Philox4x32-10, Salmon et al. 2011).
//
// Streams are addressed, not stateful: the draw with index `i` of stream
// `(seed, stream_id)` is a fixed function of those three integers, so any
// draw can be produced out of order and workers can generate disjoint
// sample ranges without communicating. The exact constants and the
// counter/key layout are documented in docs/formats.md so the stream can
// be reproduced by other implementations.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_(stream_id) {}

  /// Raw 64-bit output of draw `index` within this stream.
  std::uint64_t bits(std::uint64_t index) const {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(index),
        static_cast<std::uint32_t>(index >> 32),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>(stream_ >> 32)};
    const std::array<std::uint32_t, 4> out = block(ctr);
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  }

  /// Sequential draw; advances the internal draw index.
  std::uint64_t next_bits() { return bits(draw_index_++); }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  /// Uniform integer in [0, n); n must be positive. Uses 64-bit rejection
  /// sampling so the distribution is exact.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_bits();
    } while (x >= limit);
    return x % n;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr) const {
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
      const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
      const std::array<std::uint32_t, 4> next = {
          static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
          static_cast<std::uint32_t>(p1),
          static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
          static_cast<std::uint32_t>(p0)};
      ctr = next;
      k0 += 0x9E3779B9u;  // Weyl increments
      k1 += 0xBB67AE85u;
    }
    return ctr;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t draw_index_ = 0;
};

}  // namespace stewart
