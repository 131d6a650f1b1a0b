#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <boost/random/poisson_distribution.hpp>

#include "scos/acquisition.hpp"
#include "scos/contrast.hpp"
#include "scos/error.hpp"
#include "scos/synth/rng.hpp"

namespace scos::synth {

/// Dynamic-speckle parameters of a simulated measurement.
struct SpecklePhysics {
  double tau_c = 0.004;     // field decorrelation time, s (infinity = static speckle)
  double beta = 1.0;        // coherence factor in (0, 1]
  double speckle_px = 1.0;  // spatial correlation length in pixels (>= 1)
  double mean_e = 400.0;    // mean photoelectrons per pixel

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidPhysics, m); };
    if (!(tau_c > 0)) fail("tau_c must be > 0");
    if (!(beta > 0 && beta <= 1)) fail("beta must lie in (0, 1]");
    if (!(std::isfinite(speckle_px) && speckle_px >= 1)) fail("speckle_px must be >= 1");
    if (!(std::isfinite(mean_e) && mean_e > 0)) fail("mean_e must be > 0");
  }
};

/// Normalized variance of the exposure-integrated intensity for an
/// exponentially decorrelating field: (e^{-2x} - 1 + 2x) / (2x^2), x = T/tau_c.
inline double contrast_integration_factor(double x) {
  if (x < 0.05) {
    // Taylor series about 0; the closed form cancels catastrophically here.
    return 1.0 + x * (-2.0 / 3.0 + x * (1.0 / 3.0 + x * (-2.0 / 15.0 + x * (2.0 / 45.0 - x * 4.0 / 315.0))));
  }
  return (std::expm1(-2.0 * x) + 2.0 * x) / (2.0 * x * x);
}

/// Analytic K^2 for exposure `exposure` and decorrelation time `tau_c`.
inline double expected_contrast(double tau_c, double exposure, double beta) {
  if (!(tau_c > 0 && exposure > 0 && beta > 0)) {
    throw Error(ErrorCode::InvalidPhysics, "expected_contrast requires positive arguments");
  }
  return beta * contrast_integration_factor(exposure / tau_c);
}

/// Inverse of contrast_integration_factor on (0, 1]: the x with factor(x) = value.
inline double invert_integration_factor(double value) {
  if (!(value > 0 && value <= 1)) {
    throw Error(ErrorCode::InvalidPhysics, "integration factor must lie in (0, 1]");
  }
  if (value == 1.0) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (contrast_integration_factor(hi) > value) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (contrast_integration_factor(mid) > value ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct GeneratorOptions {
  double substeps_per_tau = 6.0;  // sub-steps per decorrelation time
  unsigned min_substeps = 8;
  unsigned max_substeps = 1u << 14;
  unsigned fixed_substeps = 0;    // overrides the adaptive rule when > 0
  bool instantaneous = false;     // single field sample instead of an exposure
  bool camera_noise = true;       // shot and read noise
  bool uniform_illumination = false;  // no speckle at all: constant intensity
  unsigned threads = 0;           // 0 = hardware concurrency
};

/// Per-frame physical state; lets a session vary flow and attenuation.
struct FrameConditions {
  double tau_c = 0.0;
  double mean_e = 0.0;
};

namespace detail {

// Stream identifiers for CounterRng::for_stream.
inline constexpr std::uint64_t kFieldStream = 1;
inline constexpr std::uint64_t kCameraStream = 2;

/// Weights of independent speckle patterns whose weighted sum has squared
/// contrast beta: one weight a and (n - 1) equal weights with sum 1.
inline std::vector<double> pattern_weights(double beta) {
  const auto n = static_cast<unsigned>(std::ceil(1.0 / beta - 1e-12));
  if (n <= 1) return {1.0};
  const double nd = n;
  const double a = (1.0 + std::sqrt(std::max(0.0, (nd - 1.0) * (nd * beta - 1.0)))) / nd;
  std::vector<double> w(n, (1.0 - a) / (nd - 1.0));
  w[0] = a;
  return w;
}

/// 1-D Gaussian kernel with unit sum of squares, std = speckle_px / 2.
inline std::vector<double> field_kernel(double speckle_px) {
  if (speckle_px <= 1.0) return {1.0};
  const double s = speckle_px / 2.0;
  const int r = static_cast<int>(std::ceil(3.0 * s));
  std::vector<double> k(2 * r + 1);
  double power = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (s * s));
    power += k[i + r] * k[i + r];
  }
  for (auto& v : k) v /= std::sqrt(power);
  return k;
}

/// Periodic separable convolution of a w x h plane.
inline void convolve_periodic(std::vector<double>& plane, std::vector<double>& scratch,
                              std::uint32_t w, std::uint32_t h, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  scratch.resize(plane.size());
  for (std::uint32_t y = 0; y < h; ++y) {
    const double* row = plane.data() + std::size_t{y} * w;
    double* out = scratch.data() + std::size_t{y} * w;
    for (std::uint32_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const auto xi = static_cast<std::uint32_t>((static_cast<std::int64_t>(x) + i + w) % w);
        acc += k[i + r] * row[xi];
      }
      out[x] = acc;
    }
  }
  for (std::uint32_t y = 0; y < h; ++y) {
    double* out = plane.data() + std::size_t{y} * w;
    for (std::uint32_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const auto yi = static_cast<std::uint32_t>((static_cast<std::int64_t>(y) + i + h) % h);
        acc += k[i + r] * scratch[std::size_t{yi} * w + x];
      }
      out[x] = acc;
    }
  }
}

}  // namespace detail

/// Simulates camera frames of a dynamic speckle pattern.
///
/// The complex field at each pixel is a circular Gaussian evolving as a
/// first-order autoregression with per-sub-step correlation
/// rho = exp(-dt/tau_c). The exposure integral of |E|^2 uses the trapezoid
/// rule over M sub-steps, with M adaptive in T/tau_c. Frames are
/// independent draws (the inter-frame gap is assumed to exceed tau_c), so
/// every frame is a pure function of (seed, frame index, conditions).
class SpeckleGenerator {
 public:
  SpeckleGenerator(SpecklePhysics physics, AcquisitionConfig config, GeneratorOptions options = {})
      : physics_(physics), config_(std::move(config)), options_(options) {
    physics_.validate();
    try {
      config_.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidPhysics, e.what());
    }
    weights_ = detail::pattern_weights(physics_.beta);
    kernel_ = detail::field_kernel(physics_.speckle_px);
  }

  const SpecklePhysics& physics() const noexcept { return physics_; }
  const AcquisitionConfig& config() const noexcept { return config_; }
  const GeneratorOptions& options() const noexcept { return options_; }

  /// Sub-steps used for an exposure at decorrelation time tau_c.
  unsigned substeps(double tau_c) const {
    if (options_.fixed_substeps > 0) return options_.fixed_substeps;
    if (!std::isfinite(tau_c)) return 1;
    const double x = config_.exposure / tau_c;
    const double m = std::ceil(options_.substeps_per_tau * x);
    if (m > options_.max_substeps) {
      throw Error(ErrorCode::InvalidPhysics, "exposure/tau_c too large for the sub-step budget");
    }
    return std::max(options_.min_substeps, static_cast<unsigned>(m));
  }

  FrameConditions default_conditions() const { return {physics_.tau_c, physics_.mean_e}; }

  /// Exposure-integrated intensity per pixel, normalized to unit mean.
  std::vector<double> integrated_intensity(std::uint64_t seed, std::uint64_t frame_index,
                                           double tau_c) const {
    const std::size_t n = config_.pixel_count();
    std::vector<double> total(n, 0.0);
    if (options_.uniform_illumination) {
      std::fill(total.begin(), total.end(), 1.0);
      return total;
    }
    auto rng = CounterRng::for_stream(seed, detail::kFieldStream, frame_index);
    // Field components are N(0, 1/2) so that |E|^2 has unit mean.
    constexpr double kHalfSd = 0.70710678118654752;

    const bool is_static = !std::isfinite(tau_c);
    const unsigned m = options_.instantaneous || is_static ? 0 : substeps(tau_c);
    const double rho = m == 0 ? 1.0 : std::exp(-config_.exposure / (m * tau_c));
    const double innov = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const double innov_half = innov * kHalfSd;
    const bool filtered = kernel_.size() > 1;

    std::vector<double> re(n), im(n), acc(n), wre, wim, scratch;
    auto draw_plane = [&](std::vector<double>& plane) {
      for (auto& v : plane) v = kHalfSd * standard_normal(rng);
      if (filtered) detail::convolve_periodic(plane, scratch, config_.roi_width, config_.roi_height, kernel_);
    };
    for (const double weight : weights_) {
      draw_plane(re);
      draw_plane(im);
      if (m == 0) {
        for (std::size_t i = 0; i < n; ++i) acc[i] = re[i] * re[i] + im[i] * im[i];
      } else {
        const double end_w = 0.5 / m;
        const double mid_w = 1.0 / m;
        for (std::size_t i = 0; i < n; ++i) acc[i] = end_w * (re[i] * re[i] + im[i] * im[i]);
        for (unsigned k = 1; k <= m; ++k) {
          const double wk = k == m ? end_w : mid_w;
          if (filtered) {
            wre.resize(n);
            wim.resize(n);
            draw_plane(wre);
            draw_plane(wim);
            for (std::size_t i = 0; i < n; ++i) {
              re[i] = rho * re[i] + innov * wre[i];
              im[i] = rho * im[i] + innov * wim[i];
              acc[i] += wk * (re[i] * re[i] + im[i] * im[i]);
            }
          } else {
            for (std::size_t i = 0; i < n; ++i) {
              re[i] = rho * re[i] + innov_half * standard_normal(rng);
              im[i] = rho * im[i] + innov_half * standard_normal(rng);
              acc[i] += wk * (re[i] * re[i] + im[i] * im[i]);
            }
          }
        }
      }
      for (std::size_t i = 0; i < n; ++i) total[i] += weight * acc[i];
    }
    return total;
  }

  /// One camera frame under the given conditions.
  Frame generate_frame(std::uint64_t seed, std::uint64_t frame_index,
                       const FrameConditions& cond) const {
    const auto intensity = integrated_intensity(seed, frame_index, cond.tau_c);
    Frame frame(config_.roi_width, config_.roi_height,
                static_cast<double>(frame_index) / config_.fps);
    auto rng = CounterRng::for_stream(seed, detail::kCameraStream, frame_index);
    const double read_var = config_.read_noise * config_.read_noise;
    const double max_adu = config_.max_sample();
    for (std::size_t i = 0; i < intensity.size(); ++i) {
      const double lambda = intensity[i] * cond.mean_e;
      double electrons = lambda;
      if (options_.camera_noise) {
        if (lambda < kPoissonCutoff) {
          const double shot = lambda > 0
              ? static_cast<double>(boost::random::poisson_distribution<long, double>(lambda)(rng))
              : 0.0;
          electrons = shot + config_.read_noise * standard_normal(rng);
        } else {
          // Gaussian limit of Poisson shot noise, merged with read noise.
          electrons = lambda + std::sqrt(lambda + read_var) * standard_normal(rng);
        }
      }
      const double adu = std::floor(electrons / config_.gain + config_.dark_offset + 0.5);
      frame.samples[i] = static_cast<std::uint16_t>(std::clamp(adu, 0.0, max_adu));
    }
    return frame;
  }

  Frame generate_frame(std::uint64_t seed, std::uint64_t frame_index) const {
    return generate_frame(seed, frame_index, default_conditions());
  }

  /// Shot noise switches from exact Poisson to its Gaussian limit here.
  static constexpr double kPoissonCutoff = 30.0;

 private:
  SpecklePhysics physics_;
  AcquisitionConfig config_;
  GeneratorOptions options_;
  std::vector<double> weights_;
  std::vector<double> kernel_;
};

/// Runs `make(i)` for i in [0, n) on worker threads and hands results to
/// `emit` strictly in index order.
template <class Make, class Emit>
void generate_in_order(std::uint64_t n, unsigned threads, Make&& make, Emit&& emit) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (threads == 1) {
    for (std::uint64_t i = 0; i < n; ++i) emit(make(i));
    return;
  }
  const std::uint64_t batch = 4ull * threads;
  using Item = decltype(make(std::uint64_t{}));
  std::vector<Item> items;
  for (std::uint64_t start = 0; start < n; start += batch) {
    const std::uint64_t count = std::min(batch, n - start);
    items.assign(count, Item{});
    {
      std::vector<std::jthread> workers;
      for (unsigned w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
          for (std::uint64_t j = w; j < count; j += threads) items[j] = make(start + j);
        });
      }
    }
    for (auto& item : items) emit(std::move(item));
  }
}

/// Generates `n_frames` frames at constant physics. Deterministic in `seed`.
inline FrameStream generate_speckle_sequence(const SpecklePhysics& physics,
                                             const AcquisitionConfig& config,
                                             std::uint64_t n_frames, std::uint64_t seed,
                                             const GeneratorOptions& options = {}) {
  if (n_frames < 1) throw Error(ErrorCode::InvalidPhysics, "n_frames must be >= 1");
  const SpeckleGenerator gen(physics, config, options);
  FrameStream stream{config, {}};
  stream.frames.reserve(n_frames);
  generate_in_order(
      n_frames, options.threads, [&](std::uint64_t i) { return gen.generate_frame(seed, i); },
      [&](Frame f) { stream.frames.push_back(std::move(f)); });
  return stream;
}

/// Empirical coherence factor: mean K^2 of static, noiseless frames.
inline double calibrate_beta(const SpecklePhysics& physics, const AcquisitionConfig& config,
                             std::uint64_t seed, unsigned frames = 4) {
  SpecklePhysics stat = physics;
  stat.tau_c = std::numeric_limits<double>::infinity();
  GeneratorOptions opts;
  opts.camera_noise = false;
  AcquisitionConfig cfg = config;
  cfg.read_noise = 0.0;
  const SpeckleGenerator gen(stat, cfg, opts);
  double sum = 0.0;
  for (unsigned i = 0; i < frames; ++i) {
    // Offset the frame index so calibration never reuses a data frame's stream.
    const auto frame = gen.generate_frame(seed ^ 0xca1b7a7eULL, (1ull << 40) + i);
    sum += compute_raw_contrast(frame.view(), cfg);
  }
  return sum / frames;
}

}  // namespace scos::synth
