#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scos/acquisition.hpp"
#include "scos/contrast.hpp"
#include "scos/error.hpp"

namespace scos {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Half-open time interval [t0, t1) in seconds.
struct TimeWindow {
  double t0 = 0.0;
  double t1 = 0.0;

  double duration() const noexcept { return t1 - t0; }
  bool contains(double t) const noexcept { return t >= t0 && t < t1; }
};

struct TraceSample {
  double t = 0.0;
  double mean_adu = kNaN;
  double k_raw_sq = kNaN;
  double k_adj_sq = kNaN;
  double bfi = kNaN;
  double bvi = kNaN;
  bool valid = false;
};

/// Resting reference values. `intensity` is I_0 in ADU (dark offset included).
struct Baseline {
  TimeWindow window;
  double bfi = kNaN;
  double intensity = kNaN;
};

struct HemodynamicTrace {
  double fps = 0.0;
  double dark_offset = 0.0;
  std::vector<TraceSample> samples;
  std::optional<Baseline> baseline;
  bool normalized = false;         // bfi divided by baseline->bfi
  double smoothing_window = 0.0;   // seconds; 0 for an unsmoothed trace

  std::size_t size() const noexcept { return samples.size(); }
  double duration() const noexcept {
    return samples.empty() ? 0.0 : samples.back().t - samples.front().t + 1.0 / fps;
  }

  /// Index range [first, last) of samples whose time lies in `w`.
  std::pair<std::size_t, std::size_t> index_range(const TimeWindow& w) const {
    auto lo = std::lower_bound(samples.begin(), samples.end(), w.t0,
                               [](const TraceSample& s, double t) { return s.t < t; });
    auto hi = std::lower_bound(lo, samples.end(), w.t1,
                               [](const TraceSample& s, double t) { return s.t < t; });
    return {static_cast<std::size_t>(lo - samples.begin()),
            static_cast<std::size_t>(hi - samples.begin())};
  }
};

/// Streams frames into a trace, one sample per frame. Per-frame failures
/// (zero mean, contrast underflow) produce invalid samples, never exceptions.
class TraceBuilder {
 public:
  explicit TraceBuilder(AcquisitionConfig config, NoiseModel noise = {})
      : config_(std::move(config)), noise_(noise) {
    config_.validate();
    trace_.fps = config_.fps;
    trace_.dark_offset = config_.dark_offset;
  }

  const TraceSample& push(const FrameView& frame) {
    check_dimensions(frame, config_);
    TraceSample s;
    s.t = frame.timestamp;
    const auto m = frame_moments(frame);
    s.mean_adu = m.mean;
    const double mu = m.mean - config_.dark_offset;
    if (mu > 0) {
      s.k_raw_sq = m.variance / (mu * mu);
      s.k_adj_sq = correct_contrast(s.k_raw_sq, m.mean, config_, noise_);
      if (!reference_intensity_) reference_intensity_ = m.mean;
      s.bvi = compute_bvi(m.mean, *reference_intensity_, config_);
      if (auto bfi = try_compute_bfi(s.k_adj_sq)) {
        s.bfi = *bfi;
        s.valid = true;
      }
    }
    trace_.samples.push_back(s);
    return trace_.samples.back();
  }

  const AcquisitionConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return trace_.samples.size(); }

  HemodynamicTrace finish() && { return std::move(trace_); }

 private:
  AcquisitionConfig config_;
  NoiseModel noise_;
  HemodynamicTrace trace_;
  // BVI is provisional (relative to the first valid frame) until a baseline
  // is computed.
  std::optional<double> reference_intensity_;
};

struct BaselineOptions {
  double min_duration = 10.0;        // seconds
  std::optional<double> cardiac_hz;  // when known, also require min_cycles
  double min_cycles = 5.0;
};

/// Computes BFI_0 and I_0 as means over the valid samples in `window` and
/// rescales BVI so that it is 1 at baseline.
inline Baseline compute_baseline(HemodynamicTrace& trace, const TimeWindow& window,
                                 const BaselineOptions& opts = {}) {
  if (trace.normalized) {
    throw Error(ErrorCode::InvalidConfig, "baseline must be computed on an unnormalized trace");
  }
  if (window.duration() < opts.min_duration - 1e-9) {
    throw Error(ErrorCode::WindowTooShort, "rest window " + std::to_string(window.duration()) +
                                               " s < " + std::to_string(opts.min_duration) + " s");
  }
  if (opts.cardiac_hz && window.duration() * *opts.cardiac_hz < opts.min_cycles - 1e-9) {
    throw Error(ErrorCode::WindowTooShort, "rest window spans fewer than " +
                                               std::to_string(opts.min_cycles) + " cardiac cycles");
  }
  const auto [first, last] = trace.index_range(window);
  double bfi_sum = 0.0;
  double intensity_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = first; i < last; ++i) {
    const auto& s = trace.samples[i];
    if (!s.valid) continue;
    bfi_sum += s.bfi;
    intensity_sum += s.mean_adu - trace.dark_offset;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::WindowTooShort, "rest window holds no valid samples");

  Baseline b;
  b.window = window;
  b.bfi = bfi_sum / static_cast<double>(n);
  const double i0 = intensity_sum / static_cast<double>(n);
  b.intensity = i0 + trace.dark_offset;
  for (auto& s : trace.samples) {
    const double mu = s.mean_adu - trace.dark_offset;
    s.bvi = mu > 0 ? i0 / mu : kNaN;
  }
  trace.baseline = b;
  return b;
}

/// Centered moving average of BFI and BVI over `window_seconds`. Windows
/// shrink symmetrically at the trace ends and skip invalid samples.
inline HemodynamicTrace smooth_trace(const HemodynamicTrace& trace, double window_seconds = 2.0) {
  const auto width = static_cast<std::ptrdiff_t>(std::lround(window_seconds * trace.fps));
  if (width < 3) {
    throw Error(ErrorCode::InvalidConfig, "smoothing window covers fewer than 3 samples");
  }
  const auto n = static_cast<std::ptrdiff_t>(trace.samples.size());
  // Prefix sums over valid samples.
  std::vector<double> bfi_acc(n + 1, 0.0), bvi_acc(n + 1, 0.0);
  std::vector<std::ptrdiff_t> count_acc(n + 1, 0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& s = trace.samples[i];
    bfi_acc[i + 1] = bfi_acc[i] + (s.valid ? s.bfi : 0.0);
    bvi_acc[i + 1] = bvi_acc[i] + (s.valid ? s.bvi : 0.0);
    count_acc[i + 1] = count_acc[i] + (s.valid ? 1 : 0);
  }
  const std::ptrdiff_t before = width / 2;
  const std::ptrdiff_t after = width - before - 1;

  HemodynamicTrace out = trace;
  out.smoothing_window = window_seconds;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t edge = std::min(i, n - 1 - i);  // shrink symmetrically near the ends
    const std::ptrdiff_t lo = i - std::min(before, edge);
    const std::ptrdiff_t hi = i + std::min(after, edge) + 1;
    const auto count = count_acc[hi] - count_acc[lo];
    auto& s = out.samples[i];
    if (count == 0) {
      s.valid = false;
      s.bfi = kNaN;
      continue;
    }
    s.bfi = (bfi_acc[hi] - bfi_acc[lo]) / static_cast<double>(count);
    s.bvi = (bvi_acc[hi] - bvi_acc[lo]) / static_cast<double>(count);
    s.valid = true;
  }
  return out;
}

/// Divides BFI by BFI_0. BVI is already relative to baseline.
inline HemodynamicTrace normalize_trace(const HemodynamicTrace& trace) {
  if (!trace.baseline) throw Error(ErrorCode::BaselineMissing, "normalize_trace");
  if (trace.normalized) return trace;
  HemodynamicTrace out = trace;
  const double b = trace.baseline->bfi;
  for (auto& s : out.samples) s.bfi /= b;
  out.normalized = true;
  return out;
}

inline HemodynamicTrace denormalize_trace(const HemodynamicTrace& trace) {
  if (!trace.baseline) throw Error(ErrorCode::BaselineMissing, "denormalize_trace");
  if (!trace.normalized) return trace;
  HemodynamicTrace out = trace;
  const double b = trace.baseline->bfi;
  for (auto& s : out.samples) s.bfi *= b;
  out.normalized = false;
  return out;
}

}  // namespace scos
