#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace scos::synth {

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the n-th output is a pure function of
/// (key, n), so any frame's stream can be produced independently of the
/// others. With key = seed this is exactly SplitMix64. Satisfies
/// UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  /// Independent stream for (seed, stream, index), e.g. (seed, kind, frame).
  static constexpr CounterRng for_stream(std::uint64_t seed, std::uint64_t stream,
                                         std::uint64_t index) noexcept {
    return CounterRng(mix64(seed ^ mix64(stream * kGamma + 0x632be59bd9b4e019ULL) ^
                            mix64((index + 1) * 0xd1b54a32d192ed03ULL)));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return mix64(key_ + (++counter_) * kGamma); }

  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

namespace detail {

// 256-layer ziggurat for the standard normal (Marsaglia and Tsang layout).
struct ZigguratTables {
  static constexpr int kLayers = 256;
  static constexpr double kR = 3.6541528853610088;   // tail start
  static constexpr double kV = 0.00492867323399;     // area of each layer
  std::array<double, kLayers + 1> x{};
  std::array<double, kLayers> ratio{};

  ZigguratTables() {
    x[0] = kV / std::exp(-0.5 * kR * kR);
    x[1] = kR;
    for (int i = 2; i < kLayers; ++i) {
      x[i] = std::sqrt(-2.0 * std::log(kV / x[i - 1] + std::exp(-0.5 * x[i - 1] * x[i - 1])));
    }
    x[kLayers] = 0.0;
    for (int i = 0; i < kLayers; ++i) ratio[i] = x[i + 1] / x[i];
  }
};

inline const ZigguratTables kZiggurat{};

inline double unit_open(std::uint64_t b) noexcept {  // (0, 1]
  return static_cast<double>((b >> 11) + 1) * 0x1.0p-53;
}

template <class Rng>
[[gnu::noinline]] double ziggurat_slow(Rng& rng, std::uint64_t b) {
  const auto& t = kZiggurat;
  for (;;) {
    const int i = static_cast<int>(b & 0xFF);
    const double u = static_cast<double>(b >> 11) * 0x1.0p-52 - 1.0;
    if (std::fabs(u) < t.ratio[i]) return u * t.x[i];
    if (i == 0) {
      double xx, yy;
      do {
        xx = -std::log(unit_open(rng())) / ZigguratTables::kR;
        yy = -std::log(unit_open(rng()));
      } while (2.0 * yy < xx * xx);
      return u < 0 ? -ZigguratTables::kR - xx : ZigguratTables::kR + xx;
    }
    const double xv = u * t.x[i];
    const double f0 = std::exp(-0.5 * (t.x[i] * t.x[i] - xv * xv));
    const double f1 = std::exp(-0.5 * (t.x[i + 1] * t.x[i + 1] - xv * xv));
    if (f1 + static_cast<double>(rng() >> 11) * 0x1.0p-53 * (f0 - f1) < 1.0) return xv;
    b = rng();
  }
}

}  // namespace detail

/// Standard normal variate from one 64-bit draw on ~98.5% of calls.
template <class Rng>
inline double standard_normal(Rng& rng) {
  const auto& t = detail::kZiggurat;
  const std::uint64_t b = rng();
  const int i = static_cast<int>(b & 0xFF);
  const double u = static_cast<double>(b >> 11) * 0x1.0p-52 - 1.0;
  if (std::fabs(u) < t.ratio[i]) [[likely]] return u * t.x[i];
  return detail::ziggurat_slow(rng, b);
}

/// Uniform on [0, 1).
template <class Rng>
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace scos::synth
