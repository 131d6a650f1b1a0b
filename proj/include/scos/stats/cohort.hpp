#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scos/breathhold.hpp"
#include "scos/error.hpp"

namespace scos::stats {

/// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; passing it
/// separately keeps precision when x is close to 1.
inline double incomplete_beta(double a, double b, double x, double y) {
  if (!(a > 0 && b > 0)) throw Error(ErrorCode::DegenerateSample, "incomplete_beta needs a, b > 0");
  if (x <= 0) return 0.0;
  if (y <= 0) return 1.0;
  // Continued fraction converges quickly for x < (a + 1) / (a + b + 2).
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, y, x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  // Modified Lentz evaluation.
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double md = m;
    double num = md * (b - md) * x / ((a + 2 * md - 1) * (a + 2 * md));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + md) * (a + b + md) * x / ((a + 2 * md) * (a + 2 * md + 1));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_front) * h / a;
}

/// Two-sided tail probability P(|T| >= |t|) of Student's t with nu > 0.
inline double student_t_two_sided(double t, double nu) {
  if (std::isnan(t) || !(nu > 0)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  return incomplete_beta(0.5 * nu, 0.5, nu / (nu + t2), t2 / (nu + t2));
}

/// Table-1 significance stars; thresholds are strict.
inline std::string_view significance(double p) {
  if (p < 0.0001) return "****";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "ns";
}

struct GroupStats {
  std::size_t n = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();  // n - 1 divisor
};

inline GroupStats describe(std::span<const double> x) {
  GroupStats g;
  g.n = x.size();
  if (g.n == 0) return g;
  g.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(g.n);
  if (g.n > 1) {
    double ss = 0.0;
    for (const double v : x) ss += (v - g.mean) * (v - g.mean);
    g.sd = std::sqrt(ss / static_cast<double>(g.n - 1));
  }
  return g;
}

struct WelchResult {
  GroupStats a, b;
  double t = 0.0;
  double df = std::numeric_limits<double>::quiet_NaN();
  double p = 1.0;
  std::string_view stars = "ns";
  bool degenerate = false;  // both variances zero; p set by convention
};

/// Welch's unequal-variance t-test, two-sided.
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error(ErrorCode::DegenerateSample, "each sample needs n >= 2 (got " +
                                                 std::to_string(a.size()) + ", " +
                                                 std::to_string(b.size()) + ")");
  }
  WelchResult r;
  r.a = describe(a);
  r.b = describe(b);
  const double va = r.a.sd * r.a.sd / static_cast<double>(r.a.n);
  const double vb = r.b.sd * r.b.sd / static_cast<double>(r.b.n);
  const double se2 = va + vb;
  if (se2 == 0.0) {
    r.degenerate = true;
    r.t = r.a.mean == r.b.mean ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(),
                                                      r.a.mean - r.b.mean);
    r.p = r.a.mean == r.b.mean ? 1.0 : 0.0;
    r.stars = significance(r.p);
    return r;
  }
  r.t = (r.a.mean - r.b.mean) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / static_cast<double>(r.a.n - 1) + vb * vb / static_cast<double>(r.b.n - 1));
  r.p = std::clamp(student_t_two_sided(r.t, r.df), 0.0, 1.0);
  r.stars = significance(r.p);
  return r;
}

struct BoxplotSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;  // ascending

  double iqr() const noexcept { return q3 - q1; }
  double lower_fence() const noexcept { return q1 - 1.5 * iqr(); }
  double upper_fence() const noexcept { return q3 + 1.5 * iqr(); }
};

/// Quantile of sorted data by linear interpolation between order
/// statistics at rank (n - 1) p.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Quartiles, Tukey fences at 1.5 IQR (values on a fence are inside),
/// whiskers at the most extreme inside values.
inline BoxplotSummary boxplot_summary(std::span<const double> sample) {
  if (sample.size() < 4) {
    throw Error(ErrorCode::SampleTooSmall, "box plot needs n >= 4, got " + std::to_string(sample.size()));
  }
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  BoxplotSummary s;
  s.q1 = quantile_sorted(x, 0.25);
  s.median = quantile_sorted(x, 0.5);
  s.q3 = quantile_sorted(x, 0.75);
  const double lo = s.lower_fence(), hi = s.upper_fence();
  bool any_inside = false;
  for (const double v : x) {
    if (v < lo || v > hi) {
      s.outliers.push_back(v);
    } else if (!any_inside) {
      s.whisker_low = s.whisker_high = v;
      any_inside = true;
    } else {
      s.whisker_high = v;
    }
  }
  return s;
}

/// Per-subject feature means over that subject's sessions.
struct SubjectRecord {
  std::string subject_id;
  std::optional<int> risk_score;
  std::size_t session_count = 0;
  std::map<std::string, double, std::less<>> features;  // valid features only

  std::optional<double> get(std::string_view name) const {
    const auto it = features.find(name);
    if (it == features.end()) return std::nullopt;
    return it->second;
  }
};

/// Unweighted per-subject mean of each feature over the sessions where it
/// is valid. Records come out ordered by subject id.
inline std::vector<SubjectRecord> aggregate_subjects(std::span<const FeatureSet> sessions) {
  struct Acc {
    SubjectRecord rec;
    std::map<std::string, std::pair<double, std::size_t>, std::less<>> sums;
  };
  std::map<std::string, Acc> by_subject;
  for (const auto& fs : sessions) {
    auto& acc = by_subject[fs.subject_id];
    acc.rec.subject_id = fs.subject_id;
    ++acc.rec.session_count;
    if (fs.risk_score && !acc.rec.risk_score) acc.rec.risk_score = fs.risk_score;
    fs.for_each([&](std::string_view name, const Feature& f) {
      if (!f.valid) return;
      auto& [sum, n] = acc.sums[std::string(name)];
      sum += f.value;
      ++n;
    });
  }
  std::vector<SubjectRecord> out;
  for (auto& [id, acc] : by_subject) {
    for (const auto& [name, sn] : acc.sums) acc.rec.features[name] = sn.first / static_cast<double>(sn.second);
    out.push_back(std::move(acc.rec));
  }
  return out;
}

struct Groups {
  std::vector<SubjectRecord> low_risk;
  std::vector<SubjectRecord> higher_risk;
  std::vector<SubjectRecord> excluded;
};

/// Score 1: low risk; score >= 4: higher risk; scores 2-3 excluded.
inline Groups assign_groups(std::span<const SubjectRecord> records) {
  Groups g;
  for (const auto& r : records) {
    if (!r.risk_score) throw Error(ErrorCode::MissingRiskScore, "subject " + r.subject_id);
    const int s = *r.risk_score;
    if (s < 1 || s > 10) throw Error(ErrorCode::MissingRiskScore, "subject " + r.subject_id + " score out of range");
    if (s == 1) {
      g.low_risk.push_back(r);
    } else if (s >= 4) {
      g.higher_risk.push_back(r);
    } else {
      g.excluded.push_back(r);
    }
  }
  return g;
}

inline std::vector<double> feature_values(std::span<const SubjectRecord> records, std::string_view feature) {
  std::vector<double> v;
  for (const auto& r : records) {
    if (auto x = r.get(feature)) v.push_back(*x);
  }
  return v;
}

/// Inclusive risk-score range.
struct ScoreBucket {
  int lo = 1;
  int hi = 1;

  double midpoint() const noexcept { return 0.5 * (lo + hi); }
  bool contains(int s) const noexcept { return s >= lo && s <= hi; }
  std::string label() const { return lo == hi ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi); }
};

inline std::vector<ScoreBucket> default_buckets() { return {{1, 1}, {4, 4}, {5, 5}, {6, 7}}; }

/// Ranks with ties averaged, 1-based.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

/// Spearman's rank correlation; 0 when either variable is constant.
inline double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::DegenerateSample, "spearman_rho: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct BucketSummary {
  ScoreBucket bucket;
  std::size_t n = 0;
  std::optional<BoxplotSummary> box;
  std::optional<ErrorCode> error;  // EmptyBucket or SampleTooSmall
};

struct TrendResult {
  std::string feature;
  std::vector<BucketSummary> buckets;
  double spearman_rho = 0.0;
  std::size_t n = 0;
};

/// Per-bucket box plots ordered by score, plus Spearman's rho between the
/// bucket midpoint and each subject's feature value.
inline TrendResult subgroup_trend(std::span<const SubjectRecord> records, std::string_view feature,
                                  std::vector<ScoreBucket> buckets = default_buckets()) {
  std::sort(buckets.begin(), buckets.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });
  TrendResult out;
  out.feature = feature;
  std::vector<double> xs, ys;
  for (const auto& b : buckets) {
    BucketSummary bs;
    bs.bucket = b;
    std::vector<double> vals;
    for (const auto& r : records) {
      if (!r.risk_score || !b.contains(*r.risk_score)) continue;
      if (auto v = r.get(feature)) {
        vals.push_back(*v);
        xs.push_back(b.midpoint());
        ys.push_back(*v);
      }
    }
    bs.n = vals.size();
    if (vals.empty()) {
      bs.error = ErrorCode::EmptyBucket;
    } else if (vals.size() < 4) {
      bs.error = ErrorCode::SampleTooSmall;
    } else {
      bs.box = boxplot_summary(vals);
    }
    out.buckets.push_back(std::move(bs));
  }
  out.n = xs.size();
  out.spearman_rho = spearman_rho(xs, ys);
  return out;
}

struct ReportRow {
  std::string feature;
  GroupStats low, high;
  std::optional<WelchResult> result;
  std::string error;  // set when the row could not be tested
};

struct TableReport {
  std::vector<ReportRow> rows;
  std::size_t n_low = 0;
  std::size_t n_high = 0;
  std::size_t n_excluded = 0;

  const ReportRow* find(std::string_view feature) const {
    for (const auto& r : rows) {
      if (r.feature == feature) return &r;
    }
    return nullptr;
  }
};

/// Table-1 style comparison of the low- and higher-risk groups, one Welch
/// test per feature. Row failures are recorded in the row.
inline TableReport table_report(std::span<const SubjectRecord> records,
                                std::span<const std::string> features) {
  const auto groups = assign_groups(records);
  TableReport rep;
  rep.n_low = groups.low_risk.size();
  rep.n_high = groups.higher_risk.size();
  rep.n_excluded = groups.excluded.size();
  for (const auto& f : features) {
    ReportRow row;
    row.feature = f;
    const auto a = feature_values(groups.low_risk, f);
    const auto b = feature_values(groups.higher_risk, f);
    row.low = describe(a);
    row.high = describe(b);
    if (a.empty() || b.empty()) {
      row.error = std::string(to_string(ErrorCode::EmptyGroup));
    } else {
      try {
        row.result = welch_t_test(a, b);
        if (row.result->degenerate) row.error = std::string(to_string(ErrorCode::DegenerateSample));
      } catch (const Error& e) {
        row.error = std::string(to_string(e.code()));
      }
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace detail {

inline std::string fmt(const char* spec, double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace detail

/// Machine-readable report, full double precision.
inline std::string report_csv(const TableReport& rep) {
  std::ostringstream os;
  os << "feature,n_low,mean_low,sd_low,n_high,mean_high,sd_high,t,df,p,significance,error\n";
  for (const auto& r : rep.rows) {
    os << r.feature << ',' << r.low.n << ',' << detail::fmt("%.17g", r.low.mean) << ','
       << detail::fmt("%.17g", r.low.sd) << ',' << r.high.n << ',' << detail::fmt("%.17g", r.high.mean)
       << ',' << detail::fmt("%.17g", r.high.sd) << ',';
    if (r.result) {
      os << detail::fmt("%.17g", r.result->t) << ',' << detail::fmt("%.17g", r.result->df) << ','
         << detail::fmt("%.17g", r.result->p) << ',' << r.result->stars;
    } else {
      os << ",,,";
    }
    os << ',' << r.error << '\n';
  }
  return os.str();
}

/// Aligned text table: mean (std) per group, p-value and stars.
inline std::string report_text(const TableReport& rep) {
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"feature", "low-risk (n=" + std::to_string(rep.n_low) + ")",
                   "higher-risk (n=" + std::to_string(rep.n_high) + ")", "p-value", "sig"});
  auto ms = [](const GroupStats& g) {
    if (g.n == 0) return std::string("-");
    return detail::fmt("%.3g", g.mean) + " (" + (std::isnan(g.sd) ? "-" : detail::fmt("%.2g", g.sd)) + ")";
  };
  for (const auto& r : rep.rows) {
    std::string p = r.result ? detail::fmt("%.3g", r.result->p) : "";
    std::string sig = r.result ? std::string(r.result->stars) : "";
    if (!r.error.empty()) sig += sig.empty() ? r.error : " [" + r.error + "]";
    cells.push_back({r.feature, ms(r.low), ms(r.high), p, sig});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < 5; ++c) {
      os << row[c];
      if (c + 1 < 5) os << std::string(width[c] - row[c].size() + 2, ' ');
    }
    os << '\n';
  }
  os << "excluded (score 2-3): " << rep.n_excluded << '\n';
  return os.str();
}

}  // namespace scos::stats
