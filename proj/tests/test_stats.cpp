#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <gtest/gtest.h>

#include "scos/stats/cohort.hpp"
#include "test_support.hpp"

using namespace scos;
using namespace scos::stats;
using scos::test::throws_code;

namespace {

// Two-sided tail of Student's t by direct quadrature of the density.
double quadrature_p(double t, double nu) {
  const double log_c = std::lgamma(0.5 * (nu + 1)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI);
  auto density = [&](double x) { return std::exp(log_c - 0.5 * (nu + 1) * std::log1p(x * x / nu)); };
  boost::math::quadrature::exp_sinh<double> integrator;
  return 2.0 * integrator.integrate([&](double u) { return density(std::abs(t) + u); }, 0.0,
                                    std::numeric_limits<double>::infinity(), 1e-14);
}

SubjectRecord subject(const std::string& id, int score, std::map<std::string, double, std::less<>> f = {}) {
  SubjectRecord r;
  r.subject_id = id;
  r.risk_score = score;
  r.session_count = 1;
  r.features = std::move(f);
  return r;
}

}  // namespace

TEST(StudentT, MatchesBoostDistribution) {
  for (const double nu : {1.0, 2.5, 7.3, 30.0, 48.0, 400.0}) {
    boost::math::students_t dist(nu);
    for (const double t : {0.0, 0.1, 0.7, 1.96, 3.5, 8.0, 25.0}) {
      const double ref = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
      EXPECT_NEAR(student_t_two_sided(t, nu), ref, 1e-13 + 1e-12 * ref) << t << " " << nu;
      EXPECT_DOUBLE_EQ(student_t_two_sided(-t, nu), student_t_two_sided(t, nu));
    }
  }
  EXPECT_EQ(student_t_two_sided(0.0, 5.0), 1.0);
  EXPECT_EQ(student_t_two_sided(INFINITY, 5.0), 0.0);
  EXPECT_TRUE(std::isnan(student_t_two_sided(1.0, 0.0)));
}

TEST(Welch, HandComputedStatistic) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
  const auto r = welch_t_test(a, b);
  EXPECT_NEAR(r.t, -1.0, 1e-15);  // means 3, 4; variances 2.5 each
  EXPECT_NEAR(r.df, 8.0, 1e-12);
  EXPECT_NEAR(r.p, quadrature_p(r.t, r.df), 1e-9);
  EXPECT_NEAR(r.a.sd, std::sqrt(2.5), 1e-15);
  EXPECT_EQ(r.stars, "ns");
}

TEST(Welch, QuadratureOracleOnRandomPairs) {
  std::mt19937_64 g(11);
  std::uniform_int_distribution<int> size(2, 40);
  std::uniform_real_distribution<double> shift(-3.0, 3.0), scale(0.2, 5.0);
  for (int k = 0; k < 50; ++k) {
    std::normal_distribution<double> da(0.0, scale(g)), db(shift(g), scale(g));
    std::vector<double> a(size(g)), b(size(g));
    for (auto& v : a) v = da(g);
    for (auto& v : b) v = db(g);
    const auto r = welch_t_test(a, b);
    // Statistic and Welch-Satterthwaite df from first principles.
    const auto var = [](const std::vector<double>& x) {
      const double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
      double s = 0;
      for (double v : x) s += (v - m) * (v - m);
      return std::pair{m, s / (x.size() - 1)};
    };
    const auto [ma, sa] = var(a);
    const auto [mb, sb] = var(b);
    const double qa = sa / a.size(), qb = sb / b.size();
    EXPECT_NEAR(r.t, (ma - mb) / std::sqrt(qa + qb), 1e-10 * (1 + std::abs(r.t)));
    EXPECT_NEAR(r.df, (qa + qb) * (qa + qb) / (qa * qa / (a.size() - 1) + qb * qb / (b.size() - 1)), 1e-9 * r.df);
    EXPECT_NEAR(r.p, quadrature_p(r.t, r.df), 1e-9) << "pair " << k;
    EXPECT_GE(r.p, 0.0);
    EXPECT_LE(r.p, 1.0);
    EXPECT_EQ(r.stars, significance(r.p));
  }
}

TEST(Welch, IdenticalSamples) {
  const std::vector<double> a{1.5, 2.0, 7.0, 3.25};
  const auto r = welch_t_test(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
  EXPECT_EQ(r.stars, "ns");
}

TEST(Welch, Degenerate) {
  const std::vector<double> c1{2, 2, 2}, c2{3, 3, 3}, one{1};
  EXPECT_TRUE(throws_code([&] { welch_t_test(one, c1); }, ErrorCode::DegenerateSample));
  auto r = welch_t_test(c1, c1);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.p, 1.0);
  r = welch_t_test(c1, c2);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.p, 0.0);
  EXPECT_EQ(r.stars, "****");
}

TEST(Welch, SymmetryAndAffineInvariance) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 20; ++k) {
    std::vector<double> a(12), b(17);
    for (auto& v : a) v = nd(g);
    for (auto& v : b) v = 0.5 + 2.0 * nd(g);
    const auto r = welch_t_test(a, b), s = welch_t_test(b, a);
    EXPECT_EQ(r.t, -s.t);
    EXPECT_EQ(r.p, s.p);
    for (const double scale : {-3.0, 0.25, 1e3}) {
      auto a2 = a, b2 = b;
      for (auto& v : a2) v = scale * v + 7.0;
      for (auto& v : b2) v = scale * v + 7.0;
      EXPECT_NEAR(welch_t_test(a2, b2).p, r.p, 1e-12);
    }
  }
}

TEST(Significance, ThresholdsAreStrict) {
  EXPECT_EQ(significance(1e-6), "****");
  EXPECT_EQ(significance(0.0001), "***");
  EXPECT_EQ(significance(0.00009), "****");
  EXPECT_EQ(significance(0.001), "**");
  EXPECT_EQ(significance(0.01), "*");
  EXPECT_EQ(significance(0.05), "ns");
  EXPECT_EQ(significance(0.049), "*");
  EXPECT_EQ(significance(1.0), "ns");
}

TEST(Boxplot, Examples) {
  std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto s = boxplot_summary(x);
  EXPECT_EQ(s.median, 5);
  EXPECT_EQ(s.q1, 3);
  EXPECT_EQ(s.q3, 7);
  EXPECT_TRUE(s.outliers.empty());
  EXPECT_EQ(s.whisker_low, 1);
  EXPECT_EQ(s.whisker_high, 9);
  x.push_back(100);
  s = boxplot_summary(x);
  ASSERT_EQ(s.outliers.size(), 1u);
  EXPECT_EQ(s.outliers[0], 100);
  EXPECT_EQ(s.whisker_high, 9);
  EXPECT_TRUE(throws_code([] { boxplot_summary(std::vector<double>{1, 2, 3}); }, ErrorCode::SampleTooSmall));
}

// Every sample of size 4..8 over {0..3}. Quartiles are multiples of 1/4 and
// fences of 1/8, so the oracle runs in integers scaled by 8.
TEST(Boxplot, ExhaustiveOrderStatisticOracle) {
  for (int n = 4; n <= 8; ++n) {
    std::vector<int> digits(n, 0);
    for (;;) {
      std::vector<int> x = digits;
      std::sort(x.begin(), x.end());
      // q_p = x[k] + f (x[k+1] - x[k]) with (n - 1) p = k + f; in eighths.
      auto q8 = [&](int quarter) {
        const int num = (n - 1) * quarter;  // (n - 1) p in quarters
        const int k = num / 4, f = num % 4;
        const int hi = std::min(k + 1, n - 1);
        return 8 * x[k] + 2 * f * (x[hi] - x[k]);
      };
      const int q1 = q8(1), med = q8(2), q3 = q8(3);
      const int lo_f = q1 - 3 * (q3 - q1) / 2, hi_f = q3 + 3 * (q3 - q1) / 2;  // exact: q3 - q1 is even
      std::vector<double> sample(digits.begin(), digits.end());
      const auto s = boxplot_summary(sample);
      ASSERT_EQ(s.q1 * 8, q1);
      ASSERT_EQ(s.median * 8, med);
      ASSERT_EQ(s.q3 * 8, q3);
      std::vector<double> outs;
      int wl = 1 << 20, wh = -(1 << 20);
      for (int v : x) {
        if (8 * v < lo_f || 8 * v > hi_f) {
          outs.push_back(v);
        } else {
          wl = std::min(wl, v);
          wh = std::max(wh, v);
        }
      }
      ASSERT_EQ(s.outliers, outs);
      ASSERT_EQ(s.whisker_low, wl);
      ASSERT_EQ(s.whisker_high, wh);
      int i = 0;
      while (i < n && ++digits[i] == 4) digits[i++] = 0;
      if (i == n) break;
    }
  }
}

TEST(Boxplot, PermutationAndAffineProperties) {
  std::mt19937_64 g(5);
  std::lognormal_distribution<double> ld(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> x(4 + k % 20);
    for (auto& v : x) v = ld(g);
    const auto s = boxplot_summary(x);
    auto y = x;
    std::shuffle(y.begin(), y.end(), g);
    const auto p = boxplot_summary(y);
    EXPECT_EQ(p.median, s.median);
    EXPECT_EQ(p.outliers, s.outliers);
    std::vector<double> z;
    for (double v : x) z.push_back(2.0 * v + 3.0);
    const auto a = boxplot_summary(z);
    EXPECT_NEAR(a.q1, 2 * s.q1 + 3, 1e-12);
    EXPECT_NEAR(a.q3, 2 * s.q3 + 3, 1e-12);
    EXPECT_EQ(a.outliers.size(), s.outliers.size());
    // Partition: each value inside the whiskers or an outlier, never both.
    std::size_t inside = 0;
    for (double v : x) inside += (v >= s.whisker_low && v <= s.whisker_high);
    EXPECT_EQ(inside + s.outliers.size(), x.size());
    EXPECT_GE(s.whisker_low, s.lower_fence());
    EXPECT_LE(s.whisker_high, s.upper_fence());
  }
}

TEST(Groups, Assignment) {
  std::vector<SubjectRecord> r;
  int i = 0;
  for (int s : {1, 1, 4, 5, 7, 2, 3}) r.push_back(subject("S" + std::to_string(i++), s));
  const auto g = assign_groups(r);
  EXPECT_EQ(g.low_risk.size(), 2u);
  EXPECT_EQ(g.higher_risk.size(), 3u);
  EXPECT_EQ(g.excluded.size(), 2u);
  r[0].risk_score.reset();
  EXPECT_TRUE(throws_code([&] { assign_groups(r); }, ErrorCode::MissingRiskScore));
}

TEST(Groups, AggregateAveragesValidSessions) {
  FeatureSet a, b, c;
  a.subject_id = b.subject_id = "A";
  c.subject_id = "B";
  a.risk_score = b.risk_score = 1;
  c.risk_score = 5;
  a.bhi_f = Feature::ok(1.0);
  b.bhi_f = Feature::ok(2.0);
  b.bp_ratio = Feature::ok(1.5);
  c.bhi_f = Feature::fail(9.0, ErrorCode::NoResponse);
  const std::vector<FeatureSet> all{a, b, c};
  const auto recs = aggregate_subjects(all);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].session_count, 2u);
  EXPECT_DOUBLE_EQ(*recs[0].get("bhi_f"), 1.5);
  EXPECT_DOUBLE_EQ(*recs[0].get("bp_ratio"), 1.5);
  EXPECT_FALSE(recs[1].get("bhi_f").has_value());
}

TEST(Trend, Spearman) {
  std::vector<SubjectRecord> r;
  for (int s : {1, 1, 4, 4, 5, 5, 6, 6, 6}) r.push_back(subject("S" + std::to_string(r.size()), s, {{"x", s * 1.0}}));
  auto tr = subgroup_trend(r, "x");
  EXPECT_DOUBLE_EQ(tr.spearman_rho, 1.0);
  ASSERT_EQ(tr.buckets.size(), 4u);
  EXPECT_EQ(tr.buckets[0].error, ErrorCode::SampleTooSmall);
  for (auto& s : r) s.features["x"] = 3.0;
  EXPECT_EQ(subgroup_trend(r, "x").spearman_rho, 0.0);
  const std::vector<ScoreBucket> buckets{{8, 10}, {1, 1}};
  tr = subgroup_trend(r, "x", buckets);
  EXPECT_EQ(tr.buckets[0].bucket.lo, 1);
  EXPECT_EQ(tr.buckets[1].error, ErrorCode::EmptyBucket);
  EXPECT_NEAR(spearman_rho(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_EQ(average_ranks(std::vector<double>{5, 1, 5, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Trend, BucketMediansOrdered) {
  const std::vector<std::pair<int, double>> layout{{1, 1.21}, {4, 1.40}, {5, 1.50}, {6, 1.60}, {7, 1.60}};
  const std::vector<int> counts{25, 6, 10, 5, 4};
  int ordered = 0;
  for (int seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd(0.0, 0.05);
    std::vector<SubjectRecord> r;
    for (std::size_t b = 0; b < layout.size(); ++b) {
      for (int k = 0; k < counts[b]; ++k) {
        r.push_back(subject("S" + std::to_string(r.size()), layout[b].first, {{"y", layout[b].second + nd(g)}}));
      }
    }
    const auto tr = subgroup_trend(r, "y");
    bool ok = true;
    for (std::size_t i = 1; i < tr.buckets.size(); ++i) ok = ok && tr.buckets[i].box->median > tr.buckets[i - 1].box->median;
    ordered += ok;
  }
  EXPECT_GE(ordered, 950);
}

TEST(Report, RowsAndErrors) {
  std::vector<SubjectRecord> r;
  for (int k = 0; k < 6; ++k) r.push_back(subject("L" + std::to_string(k), 1, {{"x", k * 1.0}}));
  for (int k = 0; k < 6; ++k) r.push_back(subject("H" + std::to_string(k), 5, {{"x", k * 1.0}}));
  r.push_back(subject("E", 2, {{"x", 100.0}}));
  const std::vector<std::string> features{"x", "missing"};
  auto rep = table_report(r, features);
  EXPECT_EQ(rep.n_low, 6u);
  EXPECT_EQ(rep.n_high, 6u);
  EXPECT_EQ(rep.n_excluded, 1u);
  ASSERT_TRUE(rep.find("x")->result);
  EXPECT_EQ(rep.find("x")->result->stars, "ns");
  EXPECT_EQ(rep.find("missing")->error, "EmptyGroup");
  EXPECT_NE(report_csv(rep).find("feature"), std::string::npos);
  EXPECT_NE(report_text(rep).find("x"), std::string::npos);

  r.erase(std::remove_if(r.begin(), r.end(), [](const auto& s) { return s.risk_score >= 4; }), r.end());
  rep = table_report(r, features);
  EXPECT_EQ(rep.find("x")->error, "EmptyGroup");
}
