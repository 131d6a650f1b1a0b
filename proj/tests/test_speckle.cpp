#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "scos/contrast.hpp"
#include "scos/synth/session.hpp"
#include "scos/synth/speckle.hpp"
#include "scos/trace.hpp"
#include "test_support.hpp"

using namespace scos;
using namespace scos::synth;
using scos::test::throws_code;

namespace {

// K^2 / beta = (2/T) * integral_0^T (1 - t/T) exp(-2 t / tau) dt, by
// composite Simpson on a fine grid.
double integration_factor_oracle(double x) {
  const int n = 200000;
  const double h = 1.0 / n;
  auto f = [&](double s) { return 2.0 * (1.0 - s) * std::exp(-2.0 * x * s); };
  double acc = f(0.0) + f(1.0);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return acc * h / 3.0;
}

AcquisitionConfig roi(std::uint32_t side) {
  AcquisitionConfig c;
  c.roi_width = side;
  c.roi_height = side;
  return c;
}

double mean_adjusted_contrast(const FrameStream& s) {
  TraceBuilder b(s.config);
  for (const auto& f : s.frames) b.push(f.view());
  const auto tr = std::move(b).finish();
  double acc = 0.0;
  for (const auto& x : tr.samples) acc += x.k_adj_sq;
  return acc / static_cast<double>(tr.size());
}

}  // namespace

TEST(ExpectedContrast, MatchesNumericalIntegration) {
  for (double x : {1e-4, 0.01, 0.049, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 100.0}) {
    const double oracle = integration_factor_oracle(x);
    EXPECT_NEAR(contrast_integration_factor(x), oracle, 1e-10 * oracle) << "x = " << x;
  }
  EXPECT_NEAR(expected_contrast(1.0, 1.0, 1.0), 0.5677, 5e-5);
  EXPECT_NEAR(expected_contrast(0.002, 0.001, 0.5), 0.5 * integration_factor_oracle(0.5), 1e-10);
}

TEST(ExpectedContrast, LimitsAndMonotonicity) {
  EXPECT_NEAR(contrast_integration_factor(1e-9), 1.0, 1e-9);
  EXPECT_NEAR(contrast_integration_factor(1e4) * 1e4, 1.0, 1e-3);  // ~ 1/x for x >> 1
  double prev = 1.0;
  for (double x = 0.01; x < 200; x *= 1.1) {
    const double v = contrast_integration_factor(x);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_TRUE(throws_code([] { expected_contrast(0.0, 1.0, 1.0); }, ErrorCode::InvalidPhysics));
}

TEST(ExpectedContrast, InverseRoundTrip) {
  for (double x : {0.001, 0.3, 1.0, 4.0, 37.0}) {
    EXPECT_NEAR(invert_integration_factor(contrast_integration_factor(x)), x, 1e-9 * x);
  }
  EXPECT_EQ(invert_integration_factor(1.0), 0.0);
  EXPECT_TRUE(throws_code([] { invert_integration_factor(1.5); }, ErrorCode::InvalidPhysics));
}

TEST(SpecklePhysics, Validation) {
  SpecklePhysics p;
  p.tau_c = 0.0;
  EXPECT_TRUE(throws_code([&] { p.validate(); }, ErrorCode::InvalidPhysics));
  p = {};
  p.beta = 1.5;
  EXPECT_TRUE(throws_code([&] { p.validate(); }, ErrorCode::InvalidPhysics));
  p = {};
  p.speckle_px = 0.5;
  EXPECT_TRUE(throws_code([&] { p.validate(); }, ErrorCode::InvalidPhysics));
  p = {};
  p.mean_e = 0.0;
  EXPECT_TRUE(throws_code([&] { p.validate(); }, ErrorCode::InvalidPhysics));
}

TEST(SpeckleGenerator, SubstepRule) {
  AcquisitionConfig c = roi(16);
  c.exposure = 0.002;
  const SpeckleGenerator g(SpecklePhysics{}, c);
  EXPECT_EQ(g.substeps(0.004), 8u);     // x = 0.5
  EXPECT_EQ(g.substeps(0.0001), 120u);  // x = 20
  EXPECT_EQ(g.substeps(std::numeric_limits<double>::infinity()), 1u);
}

TEST(SpeckleGenerator, StaticSpeckleIsFullyDeveloped) {
  SpecklePhysics p;
  p.tau_c = std::numeric_limits<double>::infinity();
  GeneratorOptions o;
  o.camera_noise = false;
  const auto s = generate_speckle_sequence(p, roi(128), 20, 11, o);
  double k = 0.0;
  for (const auto& f : s.frames) k += compute_raw_contrast(f.view(), s.config);
  EXPECT_NEAR(k / 20.0, 1.0, 0.02);
}

TEST(SpeckleGenerator, CoherenceFactorScalesContrast) {
  SpecklePhysics p;
  p.tau_c = std::numeric_limits<double>::infinity();
  p.beta = 0.4;
  GeneratorOptions o;
  o.camera_noise = false;
  const auto s = generate_speckle_sequence(p, roi(128), 20, 12, o);
  double k = 0.0;
  for (const auto& f : s.frames) k += compute_raw_contrast(f.view(), s.config);
  EXPECT_NEAR(k / 20.0, 0.4, 0.02);
}

TEST(SpeckleGenerator, UniformIlluminationNoiseNull) {
  GeneratorOptions o;
  o.uniform_illumination = true;
  const auto s = generate_speckle_sequence(SpecklePhysics{}, roi(128), 20, 13, o);
  EXPECT_NEAR(mean_adjusted_contrast(s), 0.0, 0.003);
}

TEST(SpeckleGenerator, DynamicClosureSmallRoi) {
  for (double x : {1.0, 5.0}) {
    SpecklePhysics p;
    AcquisitionConfig c = roi(96);
    p.tau_c = c.exposure / x;
    GeneratorOptions o;
    o.threads = 1;
    const auto s = generate_speckle_sequence(p, c, 40, 14, o);
    const double expected = expected_contrast(p.tau_c, c.exposure, 1.0);
    EXPECT_NEAR(mean_adjusted_contrast(s), expected, 0.05 * expected) << "x = " << x;
  }
}

TEST(SpeckleGenerator, FasterDecorrelationLowersContrast) {
  AcquisitionConfig c = roi(64);
  double prev_k = 2.0;
  for (double tau : {0.004, 0.002, 0.001, 0.0005}) {
    SpecklePhysics p;
    p.tau_c = tau;
    const auto s = generate_speckle_sequence(p, c, 20, 15);
    const double k = mean_adjusted_contrast(s);
    EXPECT_LT(k, prev_k) << "tau_c = " << tau;
    prev_k = k;
  }
}

TEST(SpeckleGenerator, DeterministicAcrossThreadCounts) {
  GeneratorOptions one, four;
  one.threads = 1;
  four.threads = 4;
  const auto a = generate_speckle_sequence(SpecklePhysics{}, roi(32), 9, 77, one);
  const auto b = generate_speckle_sequence(SpecklePhysics{}, roi(32), 9, 77, four);
  const auto c = generate_speckle_sequence(SpecklePhysics{}, roi(32), 9, 78, one);
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    EXPECT_EQ(a.frames[i].samples, b.frames[i].samples);
    EXPECT_NE(a.frames[i].samples, c.frames[i].samples);
    EXPECT_DOUBLE_EQ(a.frames[i].timestamp, static_cast<double>(i) / 60.0);
  }
  const SpeckleGenerator g(SpecklePhysics{}, roi(32), one);
  EXPECT_EQ(g.generate_frame(77, 5).samples, a.frames[5].samples);
}

TEST(SpeckleGenerator, SamplesRespectBitDepth) {
  AcquisitionConfig c = roi(32);
  c.bit_depth = 8;
  SpecklePhysics p;
  p.mean_e = 400.0;  // saturates an 8-bit range often
  const auto s = generate_speckle_sequence(p, c, 3, 1);
  for (const auto& f : s.frames) {
    for (auto v : f.samples) ASSERT_LE(v, 255);
  }
}

TEST(PulseTemplate, KnotsAreExtremaAndMeanIsExact) {
  PulseTemplate t;
  for (const auto& k : t.knots()) EXPECT_NEAR(t(k.phase == 1.0 ? 0.0 : k.phase), k.phase == 1.0 ? 0.0 : k.value, 1e-12);
  EXPECT_GT(t(t.p1_phase), t(t.p1_phase - 0.01));
  EXPECT_GT(t(t.p1_phase), t(t.p1_phase + 0.01));
  EXPECT_LT(t(t.notch_phase), t(t.notch_phase - 0.01));
  EXPECT_LT(t(t.notch_phase), t(t.notch_phase + 0.01));
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += t((i + 0.5) / n);
  EXPECT_NEAR(acc / n, t.mean(), 1e-8);
  PulseTemplate bad;
  bad.p2_phase = 0.1;
  EXPECT_TRUE(throws_code([&] { bad.validate(); }, ErrorCode::InvalidScript));
}

TEST(SessionCurves, EnvelopeApexAndHeartRate) {
  SessionScript s;
  const SessionCurves c(s);
  double best = 0.0, t_best = 0.0;
  for (double t = 0.0; t < s.duration; t += 0.001) {
    if (c.flow_envelope(t) > best) best = c.flow_envelope(t), t_best = t;
  }
  EXPECT_NEAR(best, 1.0 + s.flow_change, 1e-9);
  EXPECT_NEAR(t_best, c.t_flow_max(), 2e-3);
  EXPECT_GT(c.t_flow_max(), s.t_start + 0.5 * s.t_bh);
  EXPECT_LT(c.t_flow_max(), s.t_peak());
  EXPECT_NEAR(c.t_volume_max() - c.t_flow_max(), s.volume_lag, 0.05);
  EXPECT_DOUBLE_EQ(c.hr(10.0), s.hr_rest);
  EXPECT_NEAR(c.hr(c.t_flow_max()), s.hr_peak, 1e-9);
  EXPECT_DOUBLE_EQ(c.flow_envelope(s.t_start - 1.0), 1.0);
  // 72 bpm at rest: one onset per 5/6 s.
  const auto onsets = c.pulse_onsets();
  ASSERT_GT(onsets.size(), 10u);
  EXPECT_NEAR(onsets[1] - onsets[0], 60.0 / s.hr_rest, 1e-3);
}

TEST(SessionCurves, ScriptValidation) {
  SessionScript s;
  s.t_start = 20.0;
  EXPECT_TRUE(throws_code([&] { SessionCurves c(s); }, ErrorCode::InvalidScript));
  s = {};
  s.t_bh = 150.0;
  EXPECT_TRUE(throws_code([&] { s.validate(); }, ErrorCode::InvalidScript));
}

TEST(SessionConditions, ExpectedContrastScalesInverselyWithFlow) {
  SessionScript s;
  const SessionCurves c(s);
  const SpecklePhysics p;
  const AcquisitionConfig cfg;
  const double k0 = expected_contrast(p.tau_c, cfg.exposure, 1.0);
  for (double t : {5.0, 70.0, 90.0, 97.3, 120.0}) {
    const auto cond = session_conditions(c, p, cfg, t);
    EXPECT_NEAR(expected_contrast(cond.tau_c, cfg.exposure, 1.0), k0 / c.flow(t), 1e-12);
    EXPECT_NEAR(cond.mean_e, p.mean_e / c.volume(t), 1e-9);
  }
}

TEST(SessionSynthesis, GroundTruthAndFrameCount) {
  SessionScript s;
  s.duration = 50.0;
  s.t_start = 30.0;
  s.t_bh = 8.0;
  AcquisitionConfig cfg = roi(16);
  cfg.fps = 20.0;
  const auto [stream, truth] = synthesize_breathhold_session(s, SpecklePhysics{}, cfg, 5);
  EXPECT_EQ(stream.frames.size(), 1000u);
  EXPECT_EQ(truth.frame_count, 1000u);
  EXPECT_DOUBLE_EQ(truth.bfi_change_pct, 44.0);
  EXPECT_DOUBLE_EQ(truth.bhi_f, 44.0 / 8.0);
  EXPECT_DOUBLE_EQ(truth.bp_ratio, 44.0 / 20.0);
  EXPECT_NEAR(truth.calibrated_beta, 1.0, 0.1);
  ASSERT_EQ(truth.flow.size(), 1000u);
  const auto again = synthesize_breathhold_session(s, SpecklePhysics{}, cfg, 5);
  EXPECT_EQ(again.first.frames.back().samples, stream.frames.back().samples);
}
