#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "scos/annotation.hpp"
#include "scos/cardiac.hpp"
#include "scos/error.hpp"
#include "scos/trace.hpp"

namespace scos {

struct BreathHoldOptions {
  double post_window = 10.0;      // peak search continues this long after the hold, s
  double baseline_seconds = 10.0; // rest window [t_start - baseline_seconds, t_start)
  double smoothing_seconds = 2.0;
  double return_band = 0.02;      // |trace - 1| at which the response has returned
  double min_amplitude = 0.05;    // smaller peak changes are degenerate
  double min_fit_quality = 0.5;
  std::size_t min_fit_samples = 10;
  int max_iterations = 200;
  double epsilon_bhi = 0.01;      // %/s
  double hr_max_margin = 10.0;    // hr_max searched up to t_max + margin, s
};

enum class Signal { BFI, BVI };

struct BhiResult {
  double bhi_f = kNaN;       // %/s
  double bhi_v = kNaN;
  double bfi_change = kNaN;  // %
  double bvi_change = kNaN;
  double bfi_max = kNaN;     // relative to baseline
  double bvi_max = kNaN;
  double t_max = kNaN;       // time of the BFI maximum, s
  double t_bvi_max = kNaN;
  double peak_lag = kNaN;    // t_bvi_max - t_max
  bool bfi_response = false; // false: NoResponse (maximum below baseline)
  bool bvi_response = false;
};

namespace detail {

inline double relative_value(const HemodynamicTrace& trace, const TraceSample& s, Signal which) {
  if (which == Signal::BVI) return s.bvi;
  return trace.normalized ? s.bfi : s.bfi / trace.baseline->bfi;
}

inline void require_baseline(const HemodynamicTrace& trace) {
  if (!trace.baseline) throw Error(ErrorCode::BaselineMissing, "breath-hold analysis needs a baseline");
}

}  // namespace detail

/// Peak search window used by compute_bhi for an annotation.
inline TimeWindow bhi_search_window(const BreathHoldAnnotation& ann, const BreathHoldOptions& opts = {}) {
  return {ann.t_start, ann.t_end() + opts.post_window};
}

/// Breath-holding indices: peak relative change over `search` divided by
/// the hold duration, in %/s. Values are reported even without a response.
inline BhiResult compute_bhi(const HemodynamicTrace& trace, const BreathHoldAnnotation& ann,
                             const BreathHoldOptions& opts = {},
                             std::optional<TimeWindow> search = std::nullopt) {
  detail::require_baseline(trace);
  if (trace.samples.empty()) throw Error(ErrorCode::AnnotationOutOfRange, "empty trace");
  ann.validate(trace.duration());
  const TimeWindow w = search.value_or(bhi_search_window(ann, opts));
  if (w.t0 < trace.samples.front().t || w.t1 > trace.samples.back().t + 1.0 / trace.fps) {
    throw Error(ErrorCode::AnnotationOutOfRange, "peak search window exceeds the trace");
  }
  const auto [first, last] = trace.index_range({w.t0, std::nextafter(w.t1, w.t1 + 1.0)});

  auto peak = [&](Signal which) -> std::pair<double, double> {
    double best = -std::numeric_limits<double>::infinity(), t = kNaN;
    for (std::size_t i = first; i < last; ++i) {
      const auto& s = trace.samples[i];
      if (!s.valid) continue;
      const double v = detail::relative_value(trace, s, which);
      if (v > best) best = v, t = s.t;
    }
    if (std::isnan(t)) throw Error(ErrorCode::NoResponse, "no valid samples in the search window");
    return {best, t};
  };
  BhiResult r;
  std::tie(r.bfi_max, r.t_max) = peak(Signal::BFI);
  std::tie(r.bvi_max, r.t_bvi_max) = peak(Signal::BVI);
  r.bfi_change = 100.0 * (r.bfi_max - 1.0);
  r.bvi_change = 100.0 * (r.bvi_max - 1.0);
  r.bhi_f = r.bfi_change / ann.t_bh;
  r.bhi_v = r.bvi_change / ann.t_bh;
  r.bfi_response = r.bfi_max >= 1.0;
  r.bvi_response = r.bvi_max >= 1.0;
  r.peak_lag = r.t_bvi_max - r.t_max;
  return r;
}

/// BHI_F / BHI_V.
inline double compute_bp_ratio(double bhi_f, double bhi_v, double epsilon_bhi = 0.01) {
  if (!(bhi_v > epsilon_bhi)) {
    throw Error(ErrorCode::VolumeResponseTooSmall,
                "BHI_V = " + std::to_string(bhi_v) + " %/s <= " + std::to_string(epsilon_bhi));
  }
  return bhi_f / bhi_v;
}

/// One side of the response fit: y = 1 + A exp(-|t - t_max| / tau).
struct ExpFit {
  double amplitude = kNaN;
  double tau = kNaN;
  double quality = kNaN;  // 1 - SS_res / SS_tot
  std::size_t samples = 0;
  bool valid = false;
};

struct ResponseFit {
  ExpFit growth;
  ExpFit decay;
  double t_max = kNaN;
  double t_return = kNaN;
};

/// Least-squares fit of 1 + A exp(-u / tau) to (u, y), u >= 0.
/// Levenberg-Marquardt on (A, log tau) from a coarse grid start.
inline ExpFit fit_exponential(const std::vector<double>& u, const std::vector<double>& y,
                              const BreathHoldOptions& opts = {}) {
  const std::size_t n = u.size();
  if (n < opts.min_fit_samples) {
    throw Error(ErrorCode::WindowTooShort, "fit needs at least " +
                                               std::to_string(opts.min_fit_samples) + " samples");
  }
  // For fixed tau the best A is linear least squares.
  auto best_amplitude = [&](double tau, double& sse) {
    double gg = 0.0, gy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = std::exp(-u[i] / tau);
      gg += g * g;
      gy += g * (y[i] - 1.0);
    }
    const double a = gg > 0 ? gy / gg : 0.0;
    sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - 1.0 - a * std::exp(-u[i] / tau);
      sse += r * r;
    }
    return a;
  };
  double a = 0.0, s = 0.0, sse = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 80; ++k) {
    const double tau = 0.1 * std::pow(10.0, k * 4.0 / 80.0);  // 0.1 s .. 1000 s
    double e;
    const double ak = best_amplitude(tau, e);
    if (e < sse) sse = e, a = ak, s = std::log(tau);
  }

  auto eval_sse = [&](double aa, double ss) {
    const double tau = std::exp(ss);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - 1.0 - aa * std::exp(-u[i] / tau);
      acc += r * r;
    }
    return acc;
  };
  double lambda = 1e-3;
  bool converged = false;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double tau = std::exp(s);
    double jaa = 0.0, jas = 0.0, jss = 0.0, ga = 0.0, gs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = std::exp(-u[i] / tau);
      const double r = y[i] - 1.0 - a * g;
      const double da = g;
      const double ds = a * g * u[i] / tau;
      jaa += da * da;
      jas += da * ds;
      jss += ds * ds;
      ga += da * r;
      gs += ds * r;
    }
    bool stepped = false;
    for (int tries = 0; tries < 30; ++tries) {
      const double m00 = jaa * (1.0 + lambda), m11 = jss * (1.0 + lambda), m01 = jas;
      const double det = m00 * m11 - m01 * m01;
      if (!(std::fabs(det) > 0)) break;
      const double step_a = (m11 * ga - m01 * gs) / det;
      const double step_s = (m00 * gs - m01 * ga) / det;
      const double e = eval_sse(a + step_a, s + step_s);
      if (e <= sse) {
        const bool tiny = std::fabs(step_a) <= 1e-10 * (std::fabs(a) + 1e-10) &&
                          std::fabs(step_s) <= 1e-10;
        a += step_a;
        s += step_s;
        sse = e;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        converged = tiny || sse == 0.0;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) converged = true;  // no downhill step left: at a minimum
    if (converged) break;
  }
  if (!converged || !std::isfinite(a) || !std::isfinite(s) || std::exp(s) > 1e4 || std::exp(s) < 1e-3) {
    throw Error(ErrorCode::FitDiverged, "exponential fit did not converge");
  }
  double mean = 0.0;
  for (const double v : y) mean += v;
  mean /= static_cast<double>(n);
  double sst = 0.0;
  for (const double v : y) sst += (v - mean) * (v - mean);
  ExpFit f;
  f.amplitude = a;
  f.tau = std::exp(s);
  f.quality = sst > 0 ? 1.0 - sse / sst : (sse == 0 ? 1.0 : 0.0);
  f.samples = n;
  f.valid = f.quality >= opts.min_fit_quality && f.tau > 0;
  return f;
}

/// Growth and decay time constants of a response peaking at t_max.
/// Growth is fitted on [t_start, t_max], decay on [t_max, t_return], where
/// t_return is the first time after t_max the trace is back within the
/// return band (or the trace end).
inline ResponseFit fit_response(const HemodynamicTrace& trace, const BreathHoldAnnotation& ann,
                                Signal which, double t_max, const BreathHoldOptions& opts = {}) {
  detail::require_baseline(trace);
  ann.validate(trace.duration());
  ResponseFit out;
  out.t_max = t_max;
  const auto& samples = trace.samples;
  const auto peak_it = std::lower_bound(samples.begin(), samples.end(), t_max,
                                        [](const TraceSample& s, double t) { return s.t < t; });
  if (peak_it == samples.end()) throw Error(ErrorCode::AnnotationOutOfRange, "t_max beyond the trace");
  const auto peak = static_cast<std::size_t>(peak_it - samples.begin());
  const double amplitude = detail::relative_value(trace, samples[peak], which) - 1.0;
  if (!(amplitude >= opts.min_amplitude)) {
    throw Error(ErrorCode::DegenerateResponse, "peak change " + std::to_string(amplitude) +
                                                   " below " + std::to_string(opts.min_amplitude));
  }

  std::vector<double> u, y;
  for (std::size_t i = trace.index_range({ann.t_start, ann.t_start}).first; i <= peak; ++i) {
    if (!samples[i].valid) continue;
    u.push_back(t_max - samples[i].t);
    y.push_back(detail::relative_value(trace, samples[i], which));
  }
  out.growth = fit_exponential(u, y, opts);

  u.clear();
  y.clear();
  out.t_return = samples.back().t;
  for (std::size_t i = peak; i < samples.size(); ++i) {
    if (!samples[i].valid) continue;
    const double v = detail::relative_value(trace, samples[i], which);
    u.push_back(samples[i].t - t_max);
    y.push_back(v);
    if (i > peak && std::fabs(v - 1.0) <= opts.return_band) {
      out.t_return = samples[i].t;
      break;
    }
  }
  out.decay = fit_exponential(u, y, opts);
  return out;
}

/// A scalar feature with its validity; `error` names the reason when invalid.
struct Feature {
  double value = kNaN;
  bool valid = false;
  std::string error;

  static Feature ok(double v) { return {v, std::isfinite(v), std::isfinite(v) ? "" : "NonFinite"}; }
  static Feature fail(double v, ErrorCode code) { return {v, false, std::string(to_string(code))}; }
};

struct FeatureSet {
  std::string subject_id;
  std::string session_id;
  std::optional<int> risk_score;

  Feature bhi_f, bhi_v, bp_ratio;
  Feature bfi_change, bvi_change;
  Feature tau_growth, tau_decay;
  Feature t_max, t_bh, peak_lag;
  Feature hr_rest, hr_max;
  Feature peaks_ratio_resting, peaks_ratio_bh, peaks_ratio_of_ratios;

  // Intermediate values.
  double t_start = kNaN;
  double bfi_0 = kNaN;  // baseline BFI in trace units
  double intensity_0 = kNaN;
  double bfi_max = kNaN;  // relative
  double bvi_max = kNaN;
  double t_bvi_max = kNaN;
  double t_return = kNaN;
  double fit_quality_growth = kNaN;
  double fit_quality_decay = kNaN;
  std::size_t n_pulses_resting = 0;
  std::size_t n_pulses_bh = 0;

  /// Visits (name, feature) in a fixed order.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("bhi_f", self.bhi_f);
    f("bhi_v", self.bhi_v);
    f("bp_ratio", self.bp_ratio);
    f("bfi_change", self.bfi_change);
    f("bvi_change", self.bvi_change);
    f("tau_growth", self.tau_growth);
    f("tau_decay", self.tau_decay);
    f("t_max", self.t_max);
    f("t_bh", self.t_bh);
    f("peak_lag", self.peak_lag);
    f("hr_rest", self.hr_rest);
    f("hr_max", self.hr_max);
    f("peaks_ratio_resting", self.peaks_ratio_resting);
    f("peaks_ratio_bh", self.peaks_ratio_bh);
    f("peaks_ratio_of_ratios", self.peaks_ratio_of_ratios);
  }
  template <class F> void for_each(F&& f) { visit(*this, f); }
  template <class F> void for_each(F&& f) const { visit(*this, f); }

  const Feature* find(std::string_view name) const {
    const Feature* hit = nullptr;
    for_each([&](std::string_view n, const Feature& v) {
      if (n == name) hit = &v;
    });
    return hit;
  }
};

/// Heart-rate and pulse-morphology results for one session.
struct CardiacResults {
  std::optional<HeartRateTrace> heart_rate;
  std::optional<PeaksRatioSummary> peaks;
  std::vector<PulseSegment> segments;
  std::string error;  // set when heart rate or segmentation failed outright
};

inline CardiacResults analyze_cardiac(const HemodynamicTrace& raw, const BreathHoldAnnotation& ann,
                                      const CardiacOptions& opts = {}) {
  CardiacResults c;
  try {
    c.heart_rate = heart_rate(raw, opts);
    auto seg = segment_pulses(raw, *c.heart_rate, opts);
    for (auto& s : seg.segments) s = detect_peaks(std::move(s), opts);
    c.peaks = peaks_ratio_summary(seg.segments, ann, opts);
    c.segments = std::move(seg.segments);
  } catch (const Error& e) {
    c.error = std::string(to_string(e.code()));
  }
  return c;
}

/// Assembles all features of one session from a normalized, smoothed trace
/// with baseline, and the cardiac results. Component failures become
/// invalid features; only an unusable annotation throws.
inline FeatureSet extract_feature_set(const HemodynamicTrace& trace, const BreathHoldAnnotation& ann,
                                      const CardiacResults& cardiac, const BreathHoldOptions& opts = {}) {
  detail::require_baseline(trace);
  FeatureSet fs;
  fs.subject_id = ann.subject_id;
  fs.session_id = ann.session_id;
  fs.risk_score = ann.risk_score;
  fs.t_start = ann.t_start;
  fs.bfi_0 = trace.baseline->bfi;
  fs.intensity_0 = trace.baseline->intensity;
  fs.t_bh = Feature::ok(ann.t_bh);

  const BhiResult bhi = compute_bhi(trace, ann, opts);
  fs.bfi_max = bhi.bfi_max;
  fs.bvi_max = bhi.bvi_max;
  fs.t_bvi_max = bhi.t_bvi_max;
  fs.bhi_f = bhi.bfi_response ? Feature::ok(bhi.bhi_f) : Feature::fail(bhi.bhi_f, ErrorCode::NoResponse);
  fs.bhi_v = bhi.bvi_response ? Feature::ok(bhi.bhi_v) : Feature::fail(bhi.bhi_v, ErrorCode::NoResponse);
  fs.bfi_change = bhi.bfi_response ? Feature::ok(bhi.bfi_change)
                                   : Feature::fail(bhi.bfi_change, ErrorCode::NoResponse);
  fs.bvi_change = bhi.bvi_response ? Feature::ok(bhi.bvi_change)
                                   : Feature::fail(bhi.bvi_change, ErrorCode::NoResponse);
  fs.t_max = Feature::ok(bhi.t_max);
  fs.peak_lag = bhi.bfi_response && bhi.bvi_response
                    ? Feature::ok(bhi.peak_lag)
                    : Feature::fail(bhi.peak_lag, ErrorCode::NoResponse);
  if (fs.bhi_f.valid && fs.bhi_v.valid) {
    try {
      fs.bp_ratio = Feature::ok(compute_bp_ratio(bhi.bhi_f, bhi.bhi_v, opts.epsilon_bhi));
    } catch (const Error& e) {
      fs.bp_ratio = Feature::fail(kNaN, e.code());
    }
  } else {
    fs.bp_ratio = Feature::fail(kNaN, ErrorCode::NoResponse);
  }

  try {
    const auto fit = fit_response(trace, ann, Signal::BFI, bhi.t_max, opts);
    fs.t_return = fit.t_return;
    fs.fit_quality_growth = fit.growth.quality;
    fs.fit_quality_decay = fit.decay.quality;
    fs.tau_growth = fit.growth.valid ? Feature::ok(fit.growth.tau)
                                     : Feature::fail(fit.growth.tau, ErrorCode::FitDiverged);
    fs.tau_decay = fit.decay.valid ? Feature::ok(fit.decay.tau)
                                   : Feature::fail(fit.decay.tau, ErrorCode::FitDiverged);
    if (!fit.growth.valid) fs.tau_growth.error = "LowFitQuality";
    if (!fit.decay.valid) fs.tau_decay.error = "LowFitQuality";
  } catch (const Error& e) {
    fs.tau_growth = Feature::fail(kNaN, e.code());
    fs.tau_decay = Feature::fail(kNaN, e.code());
  }

  const auto cardiac_fail = [&](Feature& f, const char* fallback) {
    f = Feature{kNaN, false, cardiac.error.empty() ? fallback : cardiac.error};
  };
  if (cardiac.heart_rate) {
    const auto rest = cardiac.heart_rate->mean_over({0.0, ann.t_start});
    const auto peak = cardiac.heart_rate->max_over({ann.t_start, bhi.t_max + opts.hr_max_margin});
    rest ? void(fs.hr_rest = Feature::ok(*rest)) : cardiac_fail(fs.hr_rest, "NoCardiacPeak");
    peak ? void(fs.hr_max = Feature::ok(*peak)) : cardiac_fail(fs.hr_max, "NoCardiacPeak");
  } else {
    cardiac_fail(fs.hr_rest, "NoCardiacPeak");
    cardiac_fail(fs.hr_max, "NoCardiacPeak");
  }
  if (cardiac.peaks) {
    const auto& p = *cardiac.peaks;
    fs.n_pulses_resting = p.n_pulses_resting;
    fs.n_pulses_bh = p.n_pulses_bh;
    fs.peaks_ratio_resting = p.resting_error ? Feature::fail(kNaN, *p.resting_error)
                                             : Feature::ok(p.ratio_resting);
    fs.peaks_ratio_bh = p.bh_error ? Feature::fail(kNaN, *p.bh_error) : Feature::ok(p.ratio_bh);
    fs.peaks_ratio_of_ratios = p.valid() ? Feature::ok(p.ratio_of_ratios)
                                         : Feature::fail(kNaN, ErrorCode::InsufficientPulses);
  } else {
    cardiac_fail(fs.peaks_ratio_resting, "SegmentationFailed");
    cardiac_fail(fs.peaks_ratio_bh, "SegmentationFailed");
    cardiac_fail(fs.peaks_ratio_of_ratios, "SegmentationFailed");
  }
  return fs;
}

struct SessionAnalysis {
  FeatureSet features;
  CardiacResults cardiac;
};

/// Full session analysis from an unsmoothed, unnormalized trace: baseline
/// on the rest window before the hold, cardiac analysis on the raw BFI,
/// then normalization, smoothing and feature extraction.
inline SessionAnalysis analyze_session_detailed(HemodynamicTrace raw, const BreathHoldAnnotation& ann,
                                                const BreathHoldOptions& opts = {},
                                                const CardiacOptions& cardiac_opts = {}) {
  if (raw.samples.empty()) throw Error(ErrorCode::AnnotationOutOfRange, "empty trace");
  ann.validate(raw.duration());
  if (raw.normalized) raw = denormalize_trace(raw);
  compute_baseline(raw, {ann.t_start - opts.baseline_seconds, ann.t_start});
  SessionAnalysis out;
  out.cardiac = analyze_cardiac(raw, ann, cardiac_opts);
  auto trace = normalize_trace(raw);
  if (trace.smoothing_window == 0.0) trace = smooth_trace(trace, opts.smoothing_seconds);
  out.features = extract_feature_set(trace, ann, out.cardiac, opts);
  return out;
}

inline FeatureSet analyze_session(HemodynamicTrace raw, const BreathHoldAnnotation& ann,
                                  const BreathHoldOptions& opts = {},
                                  const CardiacOptions& cardiac_opts = {}) {
  return analyze_session_detailed(std::move(raw), ann, opts, cardiac_opts).features;
}

}  // namespace scos
