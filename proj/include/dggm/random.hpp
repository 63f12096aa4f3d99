#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (seed, stream id, position). A stream id is
// a 64-bit digest of a tuple of tags such as (iteration, segment, step,
// particle), so work distributed over threads consumes the same numbers no
// matter which thread runs it.

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace dggm {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix_tag(std::uint64_t h, std::uint64_t tag) noexcept {
  return splitmix64(h ^ splitmix64(tag + 0x632BE59BD9B4E019ULL));
}

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53U, kM1 = 0xCD9E8D57U;
  constexpr std::uint32_t kW0 = 0x9E3779B9U, kW1 = 0xBB67AE85U;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

}  // namespace detail

/// Digest of an ordered tuple of tags, used to name an independent stream.
inline std::uint64_t stream_id(std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = 0x2545F4914F6CDD1DULL;
  for (auto t : tags) h = detail::mix_tag(h, t);
  return h;
}

/// Named stream purposes; mixed into stream ids so different consumers never
/// share numbers.
enum class StreamTag : std::uint64_t {
  kOuterProposal = 1,
  kTuning = 2,
  kFilter = 3,
  kInit = 4,
  kMutate = 5,
  kResample = 6,
  kTerminal = 7,
  kNormConst = 8,
  kSimulate = 9,
  kPosterior = 10,
  kPredictive = 11,
  kPrior = 12,
};

inline constexpr std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

/// A UniformRandomBitGenerator over Philox4x32-10 keyed by (seed, stream).
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream() : RandomStream(0, 0) {}
  RandomStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (cursor_ == 2) refill();
    const std::size_t i = 2 * cursor_++;
    return (static_cast<std::uint64_t>(buffer_[i]) << 32) | buffer_[i + 1];
  }

  /// Uniform on the open interval (0,1).
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  /// Gamma with the given shape and unit scale (Marsaglia-Tsang squeeze;
  /// shapes below one go through the U^{1/a} boost).
  double gamma(double shape) {
    if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform(), x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_square(double dof) { return 2.0 * gamma(0.5 * dof); }

  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(*this);
  }

  bool bernoulli(double q) noexcept { return uniform() < q; }

  std::uint64_t stream() const noexcept { return stream_; }

 private:
  void refill() noexcept {
    const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(block_),
                                           static_cast<std::uint32_t>(block_ >> 32),
                                           static_cast<std::uint32_t>(stream_),
                                           static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = detail::philox4x32(ctr, key_);
    ++block_;
    cursor_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  std::size_t cursor_ = 2;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};  // ziggurat
};

inline RandomStream make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return RandomStream(seed, stream_id(tags));
}

}  // namespace dggm
