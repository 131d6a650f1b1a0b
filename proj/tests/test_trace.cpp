#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "scos/trace.hpp"
#include "test_support.hpp"

using namespace scos;
using scos::test::make_trace;
using scos::test::throws_code;

namespace {

double mean_bfi(const HemodynamicTrace& t) {
  double acc = 0.0;
  for (const auto& s : t.samples) acc += s.bfi;
  return acc / static_cast<double>(t.size());
}

}  // namespace

TEST(Baseline, ConstantTrace) {
  auto tr = make_trace(60, 30, [](double) { return 2.0; });
  const auto b = compute_baseline(tr, {5, 15});
  EXPECT_DOUBLE_EQ(b.bfi, 2.0);
  EXPECT_DOUBLE_EQ(b.intensity, 1000.0);
  EXPECT_TRUE(tr.baseline.has_value());
}

TEST(Baseline, SinusoidOverWholeCycles) {
  auto tr = make_trace(60, 30, [](double t) { return 3.0 + 0.5 * std::sin(2 * std::numbers::pi * 1.2 * t); });
  const auto b = compute_baseline(tr, {0, 10});  // 12 cycles
  EXPECT_NEAR(b.bfi, 3.0, 1e-3);
}

TEST(Baseline, RenormalizesBvi) {
  auto tr = make_trace(
      60, 40, [](double) { return 1.0; }, [](double t) { return t < 20 ? 1.25 : 1.5; });
  compute_baseline(tr, {5, 15});
  EXPECT_NEAR(tr.samples[600].bvi, 1.0, 1e-12);
  EXPECT_NEAR(tr.samples[1800].bvi, 1.5 / 1.25, 1e-12);
}

TEST(Baseline, Errors) {
  auto tr = make_trace(60, 30, [](double) { return 1.0; });
  EXPECT_TRUE(throws_code([&] { compute_baseline(tr, {0, 5}); }, ErrorCode::WindowTooShort));
  BaselineOptions o;
  o.cardiac_hz = 0.3;  // 10 s holds 3 cycles
  EXPECT_TRUE(throws_code([&] { compute_baseline(tr, {0, 10}, o); }, ErrorCode::WindowTooShort));
  for (auto& s : tr.samples) s.valid = false;
  EXPECT_TRUE(throws_code([&] { compute_baseline(tr, {0, 10}); }, ErrorCode::WindowTooShort));
}

TEST(Smoothing, ConstantUnchanged) {
  const auto tr = make_trace(60, 10, [](double) { return 4.5; });
  const auto sm = smooth_trace(tr, 2.0);
  for (const auto& s : sm.samples) EXPECT_DOUBLE_EQ(s.bfi, 4.5);
  EXPECT_EQ(sm.smoothing_window, 2.0);
}

TEST(Smoothing, ImpulseSpreadsOverWindow) {
  auto tr = make_trace(60, 10, [](double) { return 0.0; });
  tr.samples[300].bfi = 1.0;
  const auto sm = smooth_trace(tr, 2.0);
  int touched = 0;
  for (const auto& s : sm.samples) {
    if (s.bfi != 0.0) {
      EXPECT_NEAR(s.bfi, 1.0 / 120.0, 1e-15);
      ++touched;
    }
  }
  EXPECT_EQ(touched, 120);
}

TEST(Smoothing, WhiteNoiseStd) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  double acc = 0.0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    const auto tr = make_trace(60, 4, [&](double) { return nd(rng); });
    acc += std::pow(smooth_trace(tr, 2.0).samples[120].bfi, 2);
  }
  EXPECT_NEAR(std::sqrt(acc / reps), 1.0 / std::sqrt(120.0), 0.15 / std::sqrt(120.0));
}

TEST(Smoothing, EdgesShrinkSymmetrically) {
  const auto tr = make_trace(60, 10, [](double t) { return 1.0 + 2.0 * t; });
  const auto sm = smooth_trace(tr, 121.0 / 60.0);
  // An odd, centered window of any width leaves a linear trace unchanged.
  for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_NEAR(sm.samples[i].bfi, tr.samples[i].bfi, 1e-9);
}

TEST(Smoothing, MeanPreservation) {
  // Exact for linear traces under an odd window, where every sample is reproduced.
  const auto lin = make_trace(60, 10, [](double t) { return 3.0 - 0.1 * t; });
  EXPECT_NEAR(mean_bfi(smooth_trace(lin, 121.0 / 60.0)), mean_bfi(lin), 1e-12);
  // Otherwise only the edge samples are reweighted: bounded by window/N * range.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto tr = make_trace(60, 60, [&](double) { return u(rng); });
  EXPECT_LE(std::abs(mean_bfi(smooth_trace(tr)) - mean_bfi(tr)), 120.0 / tr.size());
}

TEST(Smoothing, SkipsInvalidSamples) {
  auto tr = make_trace(60, 10, [](double) { return 2.0; });
  for (int i = 100; i < 110; ++i) {
    tr.samples[i].valid = false;
    tr.samples[i].bfi = kNaN;
  }
  const auto sm = smooth_trace(tr, 2.0);
  for (const auto& s : sm.samples) {
    EXPECT_TRUE(s.valid);
    EXPECT_DOUBLE_EQ(s.bfi, 2.0);
  }
  EXPECT_TRUE(throws_code([&] { smooth_trace(tr, 0.02); }, ErrorCode::InvalidConfig));
}

TEST(Normalize, ExamplesAndRoundTrip) {
  auto tr = make_trace(60, 30, [](double t) { return t < 20 ? 2.0 : 2.88; });
  EXPECT_TRUE(throws_code([&] { normalize_trace(tr); }, ErrorCode::BaselineMissing));
  compute_baseline(tr, {0, 10});
  const auto n = normalize_trace(tr);
  EXPECT_TRUE(n.normalized);
  EXPECT_DOUBLE_EQ(n.samples[0].bfi, 1.0);
  EXPECT_NEAR(n.samples.back().bfi, 1.44, 1e-12);
  const auto back = denormalize_trace(n);
  for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_NEAR(back.samples[i].bfi, tr.samples[i].bfi, 1e-15);
  EXPECT_TRUE(throws_code([&] { compute_baseline(const_cast<HemodynamicTrace&>(n), {0, 10}); }, ErrorCode::InvalidConfig));
}

TEST(TimeWindow, HalfOpenRange) {
  const auto tr = make_trace(10, 5, [](double) { return 1.0; });
  const auto [a, b] = tr.index_range({1.0, 2.0});
  EXPECT_EQ(a, 10u);
  EXPECT_EQ(b, 20u);
  EXPECT_NEAR(tr.duration(), 5.0, 1e-12);
}
