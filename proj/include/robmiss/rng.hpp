#pragma once

#include <array>
#include <cstdint>

namespace robmiss {

/// Counter-based stream RNG (Philox4x32-10). A stream is fully determined
/// by (master_seed, stream_id): identical pairs replay bitwise-identical
/// sequences regardless of thread schedule, and distinct stream_ids give
/// statistically independent streams. Streams are single-owner; parallel
/// code uses distinct stream_ids rather than sharing.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform on (0, 1]; safe under log().
  double uniform_pos();

  /// Standard normal via Box-Muller (the paired draw is cached).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n);

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t counter) const;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t buffered_ = 0;
  bool have_buffered_ = false;
  double spare_normal_ = 0.0;
  bool have_spare_normal_ = false;
};

}  // namespace robmiss
