#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "scos/acquisition.hpp"
#include "scos/error.hpp"
#include "scos/synth/speckle.hpp"

namespace scos::synth {

/// One cardiac cycle with systolic peak P1, reflected-wave peak P2, dicrotic
/// notch and diastolic peak P3. Knots are joined by half-cosine segments, so
/// every knot is an exact local extremum with zero slope.
struct PulseTemplate {
  double p1 = 1.0;
  double p2 = 0.8;
  double p3 = 0.3;
  double p1_phase = 0.12;
  double valley_phase = 0.22;
  double p2_phase = 0.32;
  double notch_phase = 0.45;
  double p3_phase = 0.56;
  double valley_ratio = 0.7;  // P1-P2 valley relative to min(P1, P2)
  double notch_ratio = 0.5;   // notch relative to P3

  struct Knot {
    double phase;
    double value;
  };

  std::array<Knot, 7> knots() const {
    return {{{0.0, 0.0},
             {p1_phase, p1},
             {valley_phase, valley_ratio * std::min(p1, p2)},
             {p2_phase, p2},
             {notch_phase, notch_ratio * p3},
             {p3_phase, p3},
             {1.0, 0.0}}};
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidScript, m); };
    if (!(p1 > 0 && p2 > 0 && p3 > 0)) fail("pulse heights must be > 0");
    if (!(0 < p1_phase && p1_phase < valley_phase && valley_phase < p2_phase &&
          p2_phase < notch_phase && notch_phase < p3_phase && p3_phase < 1)) {
      fail("pulse phases must be strictly increasing within (0, 1)");
    }
    if (!(valley_ratio > 0 && valley_ratio < 1 && notch_ratio > 0 && notch_ratio < 1)) {
      fail("valley and notch ratios must lie in (0, 1)");
    }
  }

  /// Template value at phase in [0, 1).
  double operator()(double phase) const {
    phase -= std::floor(phase);
    const auto k = knots();
    std::size_t i = 1;
    while (i + 1 < k.size() && phase >= k[i].phase) ++i;
    const auto& a = k[i - 1];
    const auto& b = k[i];
    const double s = (phase - a.phase) / (b.phase - a.phase);
    return a.value + (b.value - a.value) * 0.5 * (1.0 - std::cos(std::numbers::pi * s));
  }

  double peak() const { return std::max(p1, p2); }

  /// Cycle average (exact: each half-cosine segment averages its endpoints).
  double mean() const {
    const auto k = knots();
    double acc = 0.0;
    for (std::size_t i = 1; i < k.size(); ++i) {
      acc += 0.5 * (k[i - 1].value + k[i].value) * (k[i].phase - k[i - 1].phase);
    }
    return acc;
  }
};

/// Breath-hold protocol and the physiological curves driving a session.
struct SessionScript {
  double duration = 180.0;
  double t_start = 60.0;  // rest occupies [0, t_start)
  double t_bh = 35.0;
  double flow_change = 0.44;    // peak relative rise of the flow envelope
  double volume_change = 0.20;  // peak relative rise of the volume envelope
  double tau_growth = 16.3;     // s
  double tau_decay = 8.0;       // s
  double peak_delay = 3.0;      // envelope apex after the end of the hold, s
  double onset_ramp = 5.0;      // smooth start of the response, s
  double volume_lag = 1.4;      // volume apex after flow apex, s
  double hr_rest = 72.0;        // bpm
  double hr_peak = 84.0;        // bpm
  double pulse_amplitude = 0.25;         // peak-to-peak flow pulsation, relative
  double volume_pulse_amplitude = 0.05;  // peak-to-peak volume pulsation, relative
  PulseTemplate pulse;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidScript, m); };
    pulse.validate();
    if (!(duration > 0)) fail("duration must be > 0");
    if (!(t_start >= 30)) fail("t_start must leave a rest period of at least 30 s");
    if (!(t_bh >= 5 && t_bh <= 120)) fail("t_bh must lie in [5, 120] s");
    if (!(t_start + t_bh < duration - 10)) fail("breath-hold must end at least 10 s before the session");
    if (!(flow_change > -0.9 && volume_change > -0.9)) fail("envelope changes must exceed -0.9");
    if (!(tau_growth > 0 && tau_decay > 0)) fail("time constants must be > 0");
    if (!(peak_delay >= 0 && onset_ramp > 0)) fail("peak_delay >= 0 and onset_ramp > 0 required");
    if (!(hr_rest >= 30 && hr_rest <= 220 && hr_peak >= 30 && hr_peak <= 220)) {
      fail("heart rates must lie in [30, 220] bpm");
    }
    if (!(pulse_amplitude >= 0 && pulse_amplitude < 1.5 && volume_pulse_amplitude >= 0 &&
          volume_pulse_amplitude < 1.5)) {
      fail("pulsation amplitudes must lie in [0, 1.5)");
    }
  }

  double t_peak() const { return t_start + t_bh + peak_delay; }
};

/// Smooth rise-and-fall response shape with maximum 1: exponential growth
/// (tau_growth) into the apex and exponential decay (tau_decay) after it,
/// joined by a soft minimum, switched on with a half-cosine ramp.
class ResponseEnvelope {
 public:
  ResponseEnvelope(double t_start, double t_apex, double tau_growth, double tau_decay,
                   double ramp)
      : t_start_(t_start), t_apex_(t_apex), tau_g_(tau_growth), tau_d_(tau_decay), ramp_(ramp) {
    // Locate the maximum numerically: coarse scan then golden-section refine.
    double best_t = t_apex_, best = raw(t_apex_);
    for (double t = t_start_; t <= t_apex_ + 5 * tau_d_; t += 0.01) {
      if (const double v = raw(t); v > best) best = v, best_t = t;
    }
    double a = best_t - 0.01, b = best_t + 0.01;
    const double g = (std::sqrt(5.0) - 1) / 2;
    for (int i = 0; i < 100; ++i) {
      const double c = b - g * (b - a), d = a + g * (b - a);
      (raw(c) > raw(d) ? b : a) = (raw(c) > raw(d) ? d : c);
    }
    t_max_ = 0.5 * (a + b);
    peak_ = raw(t_max_);
  }

  double operator()(double t) const { return raw(t) / peak_; }
  double t_max() const { return t_max_; }

 private:
  double raw(double t) const {
    if (t <= t_start_) return 0.0;
    const double u = t - t_apex_;
    const double soft = 1.0 / (std::exp(-u / tau_g_) + std::exp(u / tau_d_) - 1.0);
    const double s = std::min(1.0, (t - t_start_) / ramp_);
    return soft * 0.5 * (1.0 - std::cos(std::numbers::pi * s));
  }

  double t_start_, t_apex_, tau_g_, tau_d_, ramp_;
  double t_max_ = 0.0, peak_ = 1.0;
};

/// The time-dependent curves a script defines, evaluated on demand.
class SessionCurves {
 public:
  explicit SessionCurves(const SessionScript& script)
      : script_(validated(script)),
        flow_env_(script.t_start, script.t_peak(), script.tau_growth, script.tau_decay,
                  script.onset_ramp),
        volume_env_(script.t_start, script.t_peak() + script.volume_lag, script.tau_growth,
                    script.tau_decay, script.onset_ramp),
        pulse_mean_(script.pulse.mean()),
        pulse_peak_(script.pulse.peak()) {
    // Cardiac phase as a cumulative integral of hr/60 on a fine grid.
    const std::size_t n = static_cast<std::size_t>(std::ceil(script.duration / kPhaseStep)) + 2;
    phase_.resize(n);
    phase_[0] = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      const double t0 = (i - 1) * kPhaseStep, t1 = i * kPhaseStep;
      phase_[i] = phase_[i - 1] + 0.5 * (hr(t0) + hr(t1)) / 60.0 * kPhaseStep;
    }
  }

  double flow_envelope(double t) const { return 1.0 + script_.flow_change * flow_env_(t); }
  double volume_envelope(double t) const { return 1.0 + script_.volume_change * volume_env_(t); }
  double hr(double t) const {
    return script_.hr_rest + (script_.hr_peak - script_.hr_rest) * flow_env_(t);
  }

  double phase(double t) const {
    const double pos = std::clamp(t / kPhaseStep, 0.0, static_cast<double>(phase_.size() - 1));
    const auto i = std::min(static_cast<std::size_t>(pos), phase_.size() - 2);
    const double f = pos - i;
    return phase_[i] + f * (phase_[i + 1] - phase_[i]);
  }

  /// Zero-mean pulsation with the given peak-to-peak amplitude.
  double pulsation(double t, double amplitude) const {
    return 1.0 + amplitude * (script_.pulse(phase(t)) - pulse_mean_) / pulse_peak_;
  }

  double flow(double t) const { return flow_envelope(t) * pulsation(t, script_.pulse_amplitude); }
  double volume(double t) const {
    return volume_envelope(t) * pulsation(t, script_.volume_pulse_amplitude);
  }

  double t_flow_max() const { return flow_env_.t_max(); }
  double t_volume_max() const { return volume_env_.t_max(); }

  /// Times at which the cardiac phase crosses an integer (pulse onsets).
  std::vector<double> pulse_onsets() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < phase_.size(); ++i) {
      const double k = std::floor(phase_[i]);
      if (k > std::floor(phase_[i - 1]) && k >= 1) {
        const double f = (k - phase_[i - 1]) / (phase_[i] - phase_[i - 1]);
        const double t = (i - 1 + f) * kPhaseStep;
        if (t < script_.duration) out.push_back(t);
      }
    }
    return out;
  }

  const SessionScript& script() const { return script_; }

 private:
  static constexpr double kPhaseStep = 1e-3;
  static const SessionScript& validated(const SessionScript& s) {
    s.validate();
    return s;
  }

  SessionScript script_;
  ResponseEnvelope flow_env_;
  ResponseEnvelope volume_env_;
  double pulse_mean_;
  double pulse_peak_;
  std::vector<double> phase_;
};

/// Everything known about a synthesized session, for closed-loop checks.
struct GroundTruth {
  SessionScript script;
  SpecklePhysics physics;
  AcquisitionConfig config;
  std::uint64_t seed = 0;
  std::uint64_t frame_count = 0;
  double calibrated_beta = 1.0;
  double baseline_k_sq = 0.0;  // expected K_adjusted^2 at rest
  double bfi_change_pct = 0.0;
  double bvi_change_pct = 0.0;
  double bhi_f = 0.0;  // %/s
  double bhi_v = 0.0;  // %/s
  double bp_ratio = 0.0;
  double t_flow_max = 0.0;
  double t_volume_max = 0.0;
  double peak_lag = 0.0;
  std::vector<double> pulse_onsets;
  // Per-frame curves at frame timestamps.
  std::vector<double> t, flow, volume, hr;
};

/// Frame-level physical state for a session. The decorrelation time is set
/// so that the expected K^2 scales exactly as 1/flow, which makes the
/// recovered BFI proportional to the flow curve.
inline FrameConditions session_conditions(const SessionCurves& curves,
                                          const SpecklePhysics& physics,
                                          const AcquisitionConfig& config, double t) {
  const double x0 = config.exposure / physics.tau_c;
  const double target = contrast_integration_factor(x0) / curves.flow(t);
  if (!(target > 0 && target < 1)) {
    throw Error(ErrorCode::InvalidScript, "flow curve leaves the representable contrast range");
  }
  const double x = invert_integration_factor(target);
  return {config.exposure / x, physics.mean_e / curves.volume(t)};
}

/// Synthesizes a breath-hold session, handing frames to `sink` in order.
template <class Sink>
GroundTruth synthesize_breathhold_session(const SessionScript& script,
                                          const SpecklePhysics& physics,
                                          const AcquisitionConfig& config, std::uint64_t seed,
                                          Sink&& sink, const GeneratorOptions& options = {}) {
  script.validate();
  physics.validate();
  const SessionCurves curves(script);
  const SpeckleGenerator gen(physics, config, options);
  const auto n_frames = static_cast<std::uint64_t>(std::llround(script.duration * config.fps));

  GroundTruth truth;
  truth.script = script;
  truth.physics = physics;
  truth.config = config;
  truth.seed = seed;
  truth.frame_count = n_frames;
  truth.calibrated_beta = calibrate_beta(physics, config, seed);
  truth.baseline_k_sq = expected_contrast(physics.tau_c, config.exposure, truth.calibrated_beta);
  truth.bfi_change_pct = 100.0 * script.flow_change;
  truth.bvi_change_pct = 100.0 * script.volume_change;
  truth.bhi_f = truth.bfi_change_pct / script.t_bh;
  truth.bhi_v = truth.bvi_change_pct / script.t_bh;
  truth.bp_ratio = truth.bhi_f / truth.bhi_v;
  truth.t_flow_max = curves.t_flow_max();
  truth.t_volume_max = curves.t_volume_max();
  truth.peak_lag = truth.t_volume_max - truth.t_flow_max;
  truth.pulse_onsets = curves.pulse_onsets();

  std::vector<FrameConditions> conditions(n_frames);
  truth.t.resize(n_frames);
  truth.flow.resize(n_frames);
  truth.volume.resize(n_frames);
  truth.hr.resize(n_frames);
  for (std::uint64_t i = 0; i < n_frames; ++i) {
    const double t = static_cast<double>(i) / config.fps;
    const double mid = t + 0.5 * config.exposure;
    truth.t[i] = t;
    truth.flow[i] = curves.flow(mid);
    truth.volume[i] = curves.volume(mid);
    truth.hr[i] = curves.hr(mid);
    if (truth.flow[i] < 0.1 || truth.volume[i] < 0.1) {
      throw Error(ErrorCode::InvalidScript, "flow and volume curves must stay >= 0.1");
    }
    conditions[i] = session_conditions(curves, physics, config, mid);
  }
  generate_in_order(
      n_frames, options.threads,
      [&](std::uint64_t i) { return gen.generate_frame(seed, i, conditions[i]); },
      [&](Frame f) { sink(std::move(f)); });
  return truth;
}

/// In-memory convenience overload.
inline std::pair<FrameStream, GroundTruth> synthesize_breathhold_session(
    const SessionScript& script, const SpecklePhysics& physics, const AcquisitionConfig& config,
    std::uint64_t seed, const GeneratorOptions& options = {}) {
  FrameStream stream{config, {}};
  auto truth = synthesize_breathhold_session(
      script, physics, config, seed, [&](Frame f) { stream.frames.push_back(std::move(f)); },
      options);
  return {std::move(stream), std::move(truth)};
}

}  // namespace scos::synth
