#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "scos/annotation.hpp"
#include "scos/error.hpp"
#include "scos/trace.hpp"

namespace scos {

struct CardiacOptions {
  double window_seconds = 20.0;
  double step_seconds = 1.0;
  double band_low_hz = 0.5;
  double band_high_hz = 3.7;
  double peak_to_median = 3.0;   // spectral peak must exceed this multiple of the in-band median
  double onset_tolerance = 0.4;  // onset search spans (1 +/- tolerance) local periods
  double prominence = 0.02;      // on the [0, 1] normalized pulse
  double notch_phase_min = 0.3;  // notch search range, fraction of the cycle
  double notch_phase_max = 0.75;
  std::size_t min_pulses = 5;
  double morphology_smoothing = 0.1;  // Savitzky-Golay window before segmentation, s (0 = off)
  double noise_prominence = 4.0;      // prominence floor in units of the estimated sample noise
};

struct HeartRateSample {
  double t = 0.0;  // window center, s
  double hr = kNaN;
  double confidence = 0.0;
  bool valid = false;
};

struct HeartRateTrace {
  std::vector<HeartRateSample> samples;
  double window_seconds = 0.0;

  /// Heart rate at time t, interpolated between valid window centers.
  /// Empty when the nearest window is invalid or t lies outside coverage.
  std::optional<double> at(double t) const {
    if (samples.empty()) return std::nullopt;
    const double half = 0.5 * window_seconds;
    if (t < samples.front().t - half || t > samples.back().t + half) return std::nullopt;
    auto hi = std::lower_bound(samples.begin(), samples.end(), t,
                               [](const HeartRateSample& s, double v) { return s.t < v; });
    if (hi == samples.end()) return samples.back().valid ? std::optional(samples.back().hr) : std::nullopt;
    if (hi == samples.begin()) return hi->valid ? std::optional(hi->hr) : std::nullopt;
    const auto lo = hi - 1;
    const auto& nearest = (t - lo->t <= hi->t - t) ? *lo : *hi;
    if (!nearest.valid) return std::nullopt;
    if (!lo->valid || !hi->valid) return nearest.hr;
    const double f = (t - lo->t) / (hi->t - lo->t);
    return lo->hr + f * (hi->hr - lo->hr);
  }

  /// Mean of valid samples whose window center lies in w.
  std::optional<double> mean_over(const TimeWindow& w) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
      if (s.valid && w.contains(s.t)) sum += s.hr, ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }

  std::optional<double> max_over(const TimeWindow& w) const {
    std::optional<double> best;
    for (const auto& s : samples) {
      if (s.valid && w.contains(s.t) && (!best || s.hr > *best)) best = s.hr;
    }
    return best;
  }
};

struct SpectralPeak {
  double hz = 0.0;
  double confidence = 0.0;
};

namespace detail {

/// |X_k| of a real sequence by the Goertzel recurrence.
inline double goertzel_magnitude(std::span<const double> x, double k) {
  const double w = 2.0 * std::numbers::pi * k / static_cast<double>(x.size());
  const double coeff = 2.0 * std::cos(w);
  double s1 = 0.0, s2 = 0.0;
  for (const double v : x) {
    const double s0 = v + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  const double re = s1 - s2 * std::cos(w);
  const double im = s2 * std::sin(w);
  return std::hypot(re, im);
}

/// Vertex offset of the parabola through (-1, a), (0, b), (1, c), in [-0.5, 0.5].
inline double parabolic_offset(double a, double b, double c) {
  const double den = a - 2.0 * b + c;
  if (!(std::fabs(den) > 0)) return 0.0;
  return std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
}

}  // namespace detail

/// Dominant cardiac frequency of one uniformly sampled window: linear
/// detrend, Hann taper, DFT magnitude over the band, and log-parabolic
/// interpolation of the strongest local maximum.
inline SpectralPeak dominant_frequency(std::span<const double> x, double fps,
                                       const CardiacOptions& opts = {}) {
  const std::size_t n = x.size();
  if (n < 16) throw Error(ErrorCode::WindowTooShort, "spectral window needs >= 16 samples");
  const double nd = static_cast<double>(n);

  // Least-squares line through (i, x_i).
  const double i_mean = 0.5 * (nd - 1.0);
  double x_mean = 0.0;
  for (const double v : x) x_mean += v;
  x_mean /= nd;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double di = static_cast<double>(i) - i_mean;
    sxy += di * (x[i] - x_mean);
    sxx += di * di;
  }
  const double slope = sxy / sxx;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double di = static_cast<double>(i) - i_mean;
    const double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / nd));
    y[i] = (x[i] - x_mean - slope * di) * hann;
  }

  const double bin_hz = fps / nd;
  const auto k_lo = static_cast<std::ptrdiff_t>(std::ceil(opts.band_low_hz / bin_hz));
  const auto k_hi = std::min(static_cast<std::ptrdiff_t>(std::floor(opts.band_high_hz / bin_hz)),
                             static_cast<std::ptrdiff_t>(n / 2) - 1);
  if (k_lo < 1 || k_hi <= k_lo) {
    throw Error(ErrorCode::WindowTooShort, "window too short to resolve the cardiac band");
  }
  std::vector<double> mag(static_cast<std::size_t>(k_hi - k_lo + 3));
  for (std::ptrdiff_t k = k_lo - 1; k <= k_hi + 1; ++k) {
    mag[static_cast<std::size_t>(k - k_lo + 1)] = detail::goertzel_magnitude(y, static_cast<double>(k));
  }
  const std::span<const double> band(mag.data() + 1, mag.size() - 2);

  std::ptrdiff_t best = -1;
  for (std::size_t j = 0; j < band.size(); ++j) {
    const std::size_t m = j + 1;  // index into mag
    if (mag[m] >= mag[m - 1] && mag[m] >= mag[m + 1] && (best < 0 || mag[m] > mag[best])) {
      best = static_cast<std::ptrdiff_t>(m);
    }
  }
  std::vector<double> sorted(band.begin(), band.end());
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  double median = sorted[sorted.size() / 2];
  if (sorted.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(sorted.begin(), sorted.begin() + sorted.size() / 2));
  }
  if (best < 0 || !(mag[best] > opts.peak_to_median * median)) {
    throw Error(ErrorCode::NoCardiacPeak, "no in-band peak above " +
                                              std::to_string(opts.peak_to_median) + "x median");
  }
  const double floor = 1e-300;
  const double delta = detail::parabolic_offset(std::log(std::max(mag[best - 1], floor)),
                                                std::log(mag[best]),
                                                std::log(std::max(mag[best + 1], floor)));
  SpectralPeak p;
  p.hz = (static_cast<double>(k_lo + best - 1) + delta) * bin_hz;
  p.confidence = std::clamp(1.0 - opts.peak_to_median * median / mag[best], 0.0, 1.0);
  return p;
}

/// Sliding-window heart rate of the BFI trace. Windows with too few valid
/// samples or no spectral peak yield invalid samples.
inline HeartRateTrace heart_rate(const HemodynamicTrace& trace, const CardiacOptions& opts = {}) {
  if (!(trace.fps >= 10)) throw Error(ErrorCode::InvalidConfig, "heart_rate needs fps >= 10");
  const auto n_win = static_cast<std::size_t>(std::lround(opts.window_seconds * trace.fps));
  const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opts.step_seconds * trace.fps)));
  if (trace.size() < n_win) {
    throw Error(ErrorCode::WindowTooShort, "trace shorter than the heart-rate window");
  }
  HeartRateTrace out;
  out.window_seconds = opts.window_seconds;
  std::vector<double> buf(n_win);
  for (std::size_t start = 0; start + n_win <= trace.size(); start += step) {
    HeartRateSample hs;
    hs.t = 0.5 * (trace.samples[start].t + trace.samples[start + n_win - 1].t);
    // Gap-fill invalid samples linearly between valid neighbours.
    std::size_t valid = 0;
    std::ptrdiff_t last = -1;
    for (std::size_t i = 0; i < n_win; ++i) {
      const auto& s = trace.samples[start + i];
      if (!s.valid) continue;
      buf[i] = s.bfi;
      const auto ii = static_cast<std::ptrdiff_t>(i);
      if (last < 0) {
        std::fill(buf.begin(), buf.begin() + ii, s.bfi);
      } else {
        for (std::ptrdiff_t j = last + 1; j < ii; ++j) {
          const double f = static_cast<double>(j - last) / static_cast<double>(ii - last);
          buf[j] = buf[last] + f * (s.bfi - buf[last]);
        }
      }
      last = ii;
      ++valid;
    }
    if (2 * valid >= n_win) {
      std::fill(buf.begin() + last + 1, buf.end(), buf[last]);
      try {
        const auto p = dominant_frequency(buf, trace.fps, opts);
        hs.hr = 60.0 * p.hz;
        hs.confidence = p.confidence;
        hs.valid = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoCardiacPeak) throw;
      }
    }
    out.samples.push_back(hs);
  }
  return out;
}

struct PulseFeature {
  double t = 0.0;       // s
  double height = 0.0;  // normalized
};

struct PulseSegment {
  double t_onset = 0.0;
  double t_end = 0.0;
  double t_first = 0.0;  // time of samples[0]
  double dt = 0.0;
  std::vector<double> samples;  // min-max normalized
  double noise = 0.0;           // sample noise on the normalized scale
  std::optional<PulseFeature> p1, p2, p3, notch;

  double time_at(double index) const { return t_first + index * dt; }
};

/// Rescales to [0, 1]. Returns false for a constant segment.
inline bool normalize_segment(PulseSegment& seg) {
  if (seg.samples.empty()) return false;
  const auto [lo, hi] = std::minmax_element(seg.samples.begin(), seg.samples.end());
  const double mn = *lo, range = *hi - *lo;
  if (!(range > 0)) return false;
  for (auto& v : seg.samples) v = (v - mn) / range;
  return true;
}

struct SegmentationResult {
  std::vector<PulseSegment> segments;
  std::vector<TimeWindow> skipped;  // spans without a usable heart rate
};

namespace detail {

/// Lowest local minimum of v in [lo, hi], or -1.
inline std::ptrdiff_t lowest_local_min(const std::vector<double>& v, std::ptrdiff_t lo,
                                       std::ptrdiff_t hi) {
  lo = std::max<std::ptrdiff_t>(lo, 1);
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(v.size()) - 2);
  std::ptrdiff_t best = -1;
  for (std::ptrdiff_t i = lo; i <= hi; ++i) {
    if (v[i] <= v[i - 1] && v[i] <= v[i + 1] && (best < 0 || v[i] < v[best])) best = i;
  }
  return best;
}

}  // namespace detail

/// Splits the BFI trace into cardiac cycles. Onsets are pre-systolic minima,
/// each searched within (1 +/- onset_tolerance) local periods of the
/// previous one. Spans where the heart rate is unavailable are skipped.
inline SegmentationResult segment_pulses(const HemodynamicTrace& trace, const HeartRateTrace& hr,
                                         const CardiacOptions& opts = {}) {
  if (std::none_of(hr.samples.begin(), hr.samples.end(), [](const auto& s) { return s.valid; })) {
    throw Error(ErrorCode::SegmentationFailed, "no valid heart-rate estimate");
  }
  const auto n = static_cast<std::ptrdiff_t>(trace.size());
  const double fps = trace.fps;
  std::vector<double> v(trace.size());
  std::vector<bool> ok(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    ok[i] = trace.samples[i].valid;
    v[i] = ok[i] ? trace.samples[i].bfi : kNaN;
  }
  const std::vector<double> raw = v;
  double noise_sd = 0.0;  // of the series v as used below
  const auto half = std::lround(0.5 * opts.morphology_smoothing * fps);
  if (half > 0 && n > 2 * half) {
    // Quadratic Savitzky-Golay: suppresses frame noise while keeping peak heights.
    const double m = static_cast<double>(half);
    const double norm = (2 * m + 1) * (4 * m * m + 4 * m - 3);
    std::vector<double> c(2 * half + 1);
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      c[k + half] = 3.0 * (3 * m * m + 3 * m - 1 - 5.0 * static_cast<double>(k * k)) / norm;
    }
    std::vector<double> resid;
    for (std::ptrdiff_t i = half; i + half < n; ++i) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k) acc += c[k + half] * raw[i + k];
      v[i] = acc;  // NaN propagates to the neighbours of gaps
      if (std::isfinite(acc)) resid.push_back(std::abs(raw[i] - acc));
    }
    if (!resid.empty()) {
      // Robust sd of raw - smoothed is sigma * sqrt(1 - c0); the smoothed
      // series keeps sigma * sqrt(c0).
      auto mid = resid.begin() + static_cast<std::ptrdiff_t>(resid.size() / 2);
      std::nth_element(resid.begin(), mid, resid.end());
      const double c0 = c[half];
      noise_sd = 1.4826 * *mid * std::sqrt(c0 / (1.0 - c0));
    }
  }
  auto period_at = [&](std::ptrdiff_t i) -> std::optional<double> {
    const auto r = hr.at(trace.samples[i].t);
    if (!r || !(*r > 0)) return std::nullopt;
    return 60.0 / *r * fps;  // samples
  };
  // Onsets are located on the smoothed series, then moved to the minimum of
  // the unsmoothed one nearby and refined by a parabola through it.
  auto snap = [&](std::ptrdiff_t i) {
    std::ptrdiff_t best = i;
    for (auto k = std::max<std::ptrdiff_t>(0, i - half); k <= std::min<std::ptrdiff_t>(n - 1, i + half); ++k) {
      if (raw[k] < raw[best]) best = k;
    }
    return best;
  };
  auto refine = [&](std::ptrdiff_t i) {
    if (i < 1 || i + 1 >= n) return static_cast<double>(i);
    return static_cast<double>(i) + detail::parabolic_offset(raw[i - 1], raw[i], raw[i + 1]);
  };

  SegmentationResult out;
  std::ptrdiff_t prev = -1;
  std::ptrdiff_t cursor = 0;
  double skip_from = kNaN;  // start of the current span without heart rate
  auto close_skip = [&](double t_end) {
    if (!std::isnan(skip_from)) out.skipped.push_back({skip_from, t_end});
    skip_from = kNaN;
  };
  while (cursor < n - 1) {
    const auto period = period_at(prev >= 0 ? prev : cursor);
    if (!period) {
      if (std::isnan(skip_from)) skip_from = trace.samples[cursor].t;
      prev = -1;
      cursor += std::max<std::ptrdiff_t>(1, std::lround(0.5 * fps));
      continue;
    }
    std::ptrdiff_t next;
    if (prev < 0) {
      next = detail::lowest_local_min(v, cursor, cursor + std::lround(*period));
    } else {
      next = detail::lowest_local_min(v, prev + std::lround((1.0 - opts.onset_tolerance) * *period),
                                      prev + std::lround((1.0 + opts.onset_tolerance) * *period));
    }
    if (next >= 0) next = snap(next);
    // A trace may start on an onset: the first sample wins if the series
    // rises from it and nothing in the first period is lower.
    if (prev < 0 && cursor == 0 && n > 1 && raw[0] <= raw[1] && (next < 0 || raw[0] <= raw[next])) next = 0;
    if (next < 0) {
      if (prev < 0) break;  // ran off the end
      prev = -1;
      continue;
    }
    if (next <= prev) next = prev + 1;
    close_skip(trace.samples[next].t);
    if (prev >= 0) {
      PulseSegment seg;
      seg.dt = 1.0 / fps;
      seg.t_first = trace.samples[prev].t;
      seg.t_onset = seg.t_first + (refine(prev) - static_cast<double>(prev)) * seg.dt;
      seg.t_end = trace.samples[next].t + (refine(next) - static_cast<double>(next)) * seg.dt;
      const bool all_valid = std::all_of(ok.begin() + prev, ok.begin() + next + 1, [](bool b) { return b; });
      if (all_valid) {
        seg.samples.assign(v.begin() + prev, v.begin() + next + 1);
        const auto [lo, hi] = std::minmax_element(seg.samples.begin(), seg.samples.end());
        seg.noise = *hi > *lo ? noise_sd / (*hi - *lo) : 0.0;
        if (normalize_segment(seg)) out.segments.push_back(std::move(seg));
      }
    }
    prev = next;
    cursor = std::max(cursor, next) + 1;  // snapping may step back; never revisit
  }
  close_skip(trace.samples.back().t);
  return out;
}

struct Extremum {
  std::size_t index = 0;
  double prominence = 0.0;
};

/// Interior local maxima of v with their topographic prominence. Plateaus
/// report their middle sample.
inline std::vector<Extremum> local_maxima(const std::vector<double>& v) {
  std::vector<Extremum> out;
  const std::size_t n = v.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(v[i] > v[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 < n && v[j + 1] == v[i]) ++j;
    if (j + 1 < n && v[j + 1] < v[i]) {
      const std::size_t peak = (i + j) / 2;
      double left = v[i];
      for (std::size_t k = i; k-- > 0 && v[k] <= v[i];) left = std::min(left, v[k]);
      double right = v[j];
      for (std::size_t k = j + 1; k < n && v[k] <= v[i]; ++k) right = std::min(right, v[k]);
      out.push_back({peak, v[i] - std::max(left, right)});
    }
    i = j;
  }
  return out;
}

inline std::vector<Extremum> local_minima(const std::vector<double>& v) {
  std::vector<double> neg(v.size());
  std::transform(v.begin(), v.end(), neg.begin(), [](double x) { return -x; });
  return local_maxima(neg);
}

/// Locates P1, the dicrotic notch, P2 and P3 on a normalized segment.
/// Features below the prominence threshold are left absent.
inline PulseSegment detect_peaks(PulseSegment seg, const CardiacOptions& opts = {}) {
  seg.p1.reset();
  seg.p2.reset();
  seg.p3.reset();
  seg.notch.reset();
  const auto& v = seg.samples;
  if (v.size() < 10) return seg;
  const double last = static_cast<double>(v.size() - 1);

  auto feature = [&](std::size_t i) {
    const double d = detail::parabolic_offset(v[i - 1], v[i], v[i + 1]);
    const double h = v[i] - 0.25 * (v[i - 1] - v[i + 1]) * d;
    return PulseFeature{seg.time_at(static_cast<double>(i) + d), h};
  };

  const double min_prominence = std::max(opts.prominence, opts.noise_prominence * seg.noise);
  std::vector<Extremum> maxima;
  for (const auto& e : local_maxima(v)) {
    if (e.prominence >= min_prominence) maxima.push_back(e);
  }
  if (maxima.empty()) return seg;
  const std::size_t p1 = maxima.front().index;
  seg.p1 = feature(p1);

  std::optional<Extremum> notch;
  for (const auto& e : local_minima(v)) {
    const double phase = static_cast<double>(e.index) / last;
    if (e.index <= p1 || e.prominence < min_prominence) continue;
    if (phase < opts.notch_phase_min || phase > opts.notch_phase_max) continue;
    if (!notch || e.prominence > notch->prominence) notch = e;
  }
  if (!notch) return seg;
  seg.notch = feature(notch->index);

  std::optional<std::size_t> p2;
  for (const auto& e : maxima) {
    if (e.index > p1 && e.index < notch->index && (!p2 || v[e.index] > v[*p2])) p2 = e.index;
  }
  if (p2) seg.p2 = feature(*p2);
  for (const auto& e : maxima) {
    if (e.index > notch->index) {
      seg.p3 = feature(e.index);
      break;
    }
  }
  return seg;
}

struct PeaksRatioSummary {
  double ratio_resting = kNaN;
  double ratio_bh = kNaN;
  double ratio_of_ratios = kNaN;
  std::size_t n_pulses_resting = 0;
  std::size_t n_pulses_bh = 0;
  std::optional<ErrorCode> resting_error;
  std::optional<ErrorCode> bh_error;

  bool valid() const noexcept { return !resting_error && !bh_error; }
};

/// Mean P2/P1 over pulses lying in the rest window [0, t_start) and in the
/// breath-hold window [t_start, t_start + t_bh]. Segments need peaks detected.
inline PeaksRatioSummary peaks_ratio_summary(const std::vector<PulseSegment>& segments,
                                             const BreathHoldAnnotation& ann,
                                             const CardiacOptions& opts = {}) {
  auto window_ratio = [&](double t0, double t1, bool closed, std::size_t& count) {
    double sum = 0.0;
    count = 0;
    for (const auto& s : segments) {
      const bool inside = s.t_onset >= t0 && (closed ? s.t_end <= t1 : s.t_end < t1);
      if (!inside || !s.p1 || !s.p2 || !(s.p1->height > 0)) continue;
      sum += s.p2->height / s.p1->height;
      ++count;
    }
    return count ? sum / static_cast<double>(count) : kNaN;
  };
  PeaksRatioSummary r;
  const double rest = window_ratio(0.0, ann.t_start, false, r.n_pulses_resting);
  const double bh = window_ratio(ann.t_start, ann.t_end(), true, r.n_pulses_bh);
  if (r.n_pulses_resting >= opts.min_pulses) {
    r.ratio_resting = rest;
  } else {
    r.resting_error = ErrorCode::InsufficientPulses;
  }
  if (r.n_pulses_bh >= opts.min_pulses) {
    r.ratio_bh = bh;
  } else {
    r.bh_error = ErrorCode::InsufficientPulses;
  }
  if (r.valid()) r.ratio_of_ratios = r.ratio_bh / r.ratio_resting;
  return r;
}

}  // namespace scos
