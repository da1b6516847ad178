#pragma once

#include <cstdint>
#include <limits>

namespace catsearch {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of two words.
constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(a) ^ (b * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL));
}

/// Counter-based random stream. The i-th output depends only on
/// (seed, stream_id, i), so any number of independent streams can be handed to
/// concurrent workers and the results never depend on scheduling.
///
/// Satisfies UniformRandomBitGenerator, so it plugs into <random>
/// distributions and std::shuffle.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), key_(mix64(seed, stream_id)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Output at an arbitrary counter position; does not advance the stream.
  std::uint64_t at(std::uint64_t index) const noexcept {
    return mix64(key_ + (index + 1) * 0x9e3779b97f4a7c15ULL);
  }

  std::uint64_t next() noexcept { return at(counter_++); }
  result_type operator()() noexcept { return next(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Independent stream derived from this one's identity (not its position).
  RngStream derive(std::uint64_t id) const noexcept { return {seed_, mix64(stream_id_, id)}; }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace catsearch
