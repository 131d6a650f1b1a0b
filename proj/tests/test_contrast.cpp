#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "scos/contrast.hpp"
#include "scos/synth/rng.hpp"
#include "test_support.hpp"

using namespace scos;
using scos::test::throws_code;

namespace {

AcquisitionConfig config16(double dark = 0.0) {
  AcquisitionConfig c;
  c.roi_width = 16;
  c.roi_height = 16;
  c.dark_offset = dark;
  c.bit_depth = 16;
  return c;
}

Frame frame_from(const std::vector<std::uint16_t>& v) {
  Frame f(16, 16);
  f.samples = v;
  return f;
}

// Two-pass reference moments.
std::pair<double, double> moments(const std::vector<std::uint16_t>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (auto x : v) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(v.size())};
}

}  // namespace

TEST(RawContrast, MatchesTwoPassReference) {
  synth::CounterRng rng(1);
  std::vector<std::uint16_t> v(256);
  for (auto& x : v) x = static_cast<std::uint16_t>(100 + rng() % 3000);
  const auto [mean, var] = moments(v);
  const auto c = config16(100.0);
  const double expected = var / ((mean - 100.0) * (mean - 100.0));
  EXPECT_NEAR(compute_raw_contrast(frame_from(v).view(), c), expected, 1e-12 * expected);
}

TEST(RawContrast, UniformFrameIsZero) {
  const std::vector<std::uint16_t> v(256, 500);
  EXPECT_EQ(compute_raw_contrast(frame_from(v).view(), config16()), 0.0);
}

TEST(RawContrast, ScaleInvariantAboveOffset) {
  synth::CounterRng rng(2);
  std::vector<std::uint16_t> v(256), w(256);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<std::uint16_t>(50 + rng() % 1000);
    w[i] = static_cast<std::uint16_t>(50 + 3 * (v[i] - 50));
  }
  const auto c = config16(50.0);
  const double k1 = compute_raw_contrast(frame_from(v).view(), c);
  const double k2 = compute_raw_contrast(frame_from(w).view(), c);
  EXPECT_GE(k1, 0.0);
  EXPECT_NEAR(k1, k2, 1e-12 * k1);
}

TEST(RawContrast, Errors) {
  const auto c = config16(200.0);
  const std::vector<std::uint16_t> dark(256, 200);
  EXPECT_TRUE(throws_code([&] { compute_raw_contrast(frame_from(dark).view(), c); }, ErrorCode::ZeroMeanFrame));
  Frame small(8, 8);
  EXPECT_TRUE(throws_code([&] { compute_raw_contrast(small.view(), c); }, ErrorCode::DimensionMismatch));
}

TEST(NoiseTerms, PhotoelectronUnits) {
  AcquisitionConfig c = config16(100.0);
  c.gain = 2.0;
  c.read_noise = 5.0;
  const auto t = noise_terms(600.0, c);  // 500 ADU above offset = 1000 e-
  EXPECT_DOUBLE_EQ(t.shot, 1.0 / 1000.0);
  EXPECT_DOUBLE_EQ(t.read, 25.0 / 1e6);
  EXPECT_DOUBLE_EQ(t.quantization, 4.0 / (12.0 * 1e6));
  EXPECT_DOUBLE_EQ(correct_contrast(0.3, 600.0, c), 0.3 - t.total());
}

TEST(NoiseTerms, IdentityWithoutNoiseAndMonotone) {
  AcquisitionConfig c = config16(10.0);
  EXPECT_EQ(correct_contrast(0.42, 300.0, c, NoiseModel::none()), 0.42);
  c.read_noise = 0.0;
  NoiseModel no_shot_quant{false, true, false};
  EXPECT_EQ(correct_contrast(0.42, 300.0, c, no_shot_quant), 0.42);

  double prev = correct_contrast(0.5, 300.0, c);
  for (double r : {1.0, 2.0, 4.0, 8.0}) {
    c.read_noise = r;
    const double k = correct_contrast(0.5, 300.0, c);
    EXPECT_LT(k, prev);
    prev = k;
  }
  // Lower signal means more shot noise removed.
  EXPECT_LT(correct_contrast(0.5, 60.0, c), correct_contrast(0.5, 300.0, c));
}

TEST(Bfi, Examples) {
  EXPECT_DOUBLE_EQ(compute_bfi(0.25), 4.0);
  EXPECT_DOUBLE_EQ(compute_bfi(1.0), 1.0);
  EXPECT_TRUE(throws_code([] { compute_bfi(1e-7); }, ErrorCode::ContrastUnderflow));
  EXPECT_TRUE(throws_code([] { compute_bfi(-0.1); }, ErrorCode::ContrastUnderflow));
  EXPECT_FALSE(try_compute_bfi(kEpsilonContrast).has_value());
}

TEST(Bfi, StrictlyDecreasing) {
  double prev = compute_bfi(2e-4);
  for (double k = 3e-4; k < 2.0; k *= 1.3) {
    const double b = compute_bfi(k);
    EXPECT_LT(b, prev);
    prev = b;
  }
}

TEST(Bvi, Examples) {
  auto c = config16(0.0);
  EXPECT_DOUBLE_EQ(compute_bvi(800.0, 800.0, c), 1.0);
  EXPECT_DOUBLE_EQ(compute_bvi(400.0, 800.0, c), 2.0);
  c.dark_offset = 100.0;
  EXPECT_DOUBLE_EQ(compute_bvi(300.0, 500.0, c), 2.0);
  EXPECT_TRUE(throws_code([&] { compute_bvi(100.0, 500.0, c); }, ErrorCode::ZeroMeanFrame));
  double prev = compute_bvi(101.0, 500.0, c);
  for (double m = 110.0; m < 4000.0; m *= 1.5) {
    EXPECT_LT(compute_bvi(m, 500.0, c), prev);
    prev = compute_bvi(m, 500.0, c);
  }
}

TEST(TraceBuilder, OneSamplePerFrameAndInvalidRows) {
  auto c = config16(100.0);
  c.read_noise = 0.0;
  TraceBuilder b(c, NoiseModel::none());
  synth::CounterRng rng(3);
  std::vector<std::uint16_t> v(256);
  for (auto& x : v) x = static_cast<std::uint16_t>(100 + rng() % 2000);
  b.push(frame_from(v).view());
  const std::vector<std::uint16_t> flat(256, 700);
  const auto& s = b.push(frame_from(flat).view());  // K = 0: underflow
  EXPECT_FALSE(s.valid);
  const std::vector<std::uint16_t> dark(256, 100);
  EXPECT_FALSE(b.push(frame_from(dark).view()).valid);
  auto tr = std::move(b).finish();
  ASSERT_EQ(tr.size(), 3u);
  EXPECT_TRUE(tr.samples[0].valid);
  EXPECT_DOUBLE_EQ(tr.samples[0].bvi, 1.0);
  EXPECT_NEAR(tr.samples[1].bvi, (tr.samples[0].mean_adu - 100.0) / 600.0, 1e-12);
}
