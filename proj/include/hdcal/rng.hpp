#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

#include "hdcal/errors.hpp"

namespace hdcal {

/*
 * Counter-based random streams.
 *
 * Output i of a stream with key k is splitmix64_mix(k + (i + 1) * gamma),
 * i.e. exactly the SplitMix64 sequence started from state k. A stream is
 * therefore fully described by (key, counter) and two streams with distinct
 * keys never share state. Keys are derived from (seed, role, trial) so that
 * consumers of one role cannot perturb another.
 */
inline constexpr std::string_view kPrngName = "splitmix64-counter/v1";

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum class StreamRole : std::uint64_t {
  kForecaster = 1,  // sampling p_t from the mixture
  kTau = 2,         // hard-sequence tau tree
  kOutcome = 3,     // nature's draw X_t ~ p_t
  kGenerator = 4,   // synthetic transcripts for oracle checks
};

class RngStream {
 public:
  using result_type = std::uint64_t;
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit RngStream(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    ++counter_;
    return splitmix64_mix(key_ + counter_ * kGamma);
  }

  // Uniform on [0, n). Rejection sampling keeps the draw exact.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::kInvalidArgument, "uniform_below(0)");
    const std::uint64_t limit = max() - (max() % n + 1) % n;
    std::uint64_t x = next_u64();
    while (x > limit) x = next_u64();
    return x % n;
  }

  // Uniform on [0, n) for an arbitrary-precision bound.
  boost::multiprecision::cpp_int uniform_below(const boost::multiprecision::cpp_int& n) {
    using boost::multiprecision::cpp_int;
    if (n <= 0) throw Error(ErrorCode::kInvalidArgument, "uniform_below(<=0)");
    if (n <= cpp_int(max())) {
      return cpp_int(uniform_below(static_cast<std::uint64_t>(n)));
    }
    const std::size_t bits = boost::multiprecision::msb(n) + 1;
    const std::size_t words = (bits + 63) / 64;
    const std::size_t excess = words * 64 - bits;
    for (;;) {
      cpp_int x = 0;
      for (std::size_t w = 0; w < words; ++w) {
        x <<= 64;
        x |= next_u64();
      }
      x >>= excess;
      if (x < n) return x;
    }
  }

  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline RngStream derive_stream(std::uint64_t seed, StreamRole role, std::uint64_t trial) {
  std::uint64_t k = splitmix64_mix(seed ^ 0x6A09E667F3BCC909ULL);
  k = splitmix64_mix(k ^ (static_cast<std::uint64_t>(role) * 0xD1B54A32D192ED03ULL));
  k = splitmix64_mix(k ^ (trial + 0x3C6EF372FE94F82BULL));
  return RngStream(k);
}

}  // namespace hdcal
