#pragma once

#include <array>
#include <cstdint>

namespace srop {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by (seed, stream id); draws are a pure function of
/// (seed, stream id, draw index), so sample i of a dataset sees the same
/// numbers no matter which other samples were generated, or in what order.
/// Sub-streams derive a fresh stream id with SplitMix64 mixing.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent generator for a labelled purpose (sample index, field, ...).
  Rng substream(std::uint64_t tag) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Raw block for counter value; exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox_block(std::array<std::uint32_t, 4> counter,
                                                   std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int available_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace srop
