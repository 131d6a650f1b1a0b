#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scos/breathhold.hpp"
#include "scos/error.hpp"
#include "scos/io/cardiac_csv.hpp"
#include "scos/io/config.hpp"
#include "scos/io/frame_file.hpp"
#include "scos/io/json_io.hpp"
#include "scos/io/trace_csv.hpp"
#include "scos/stats/cohort.hpp"
#include "scos/synth/session.hpp"
#include "scos/trace.hpp"

namespace scos::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kConfigError = 3, kInsufficientData = 4 };

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidPhysics:
    case ErrorCode::InvalidScript:
      return kConfigError;
    case ErrorCode::EmptyGroup:
    case ErrorCode::WindowTooShort:
    case ErrorCode::SampleTooSmall:
      return kInsufficientData;
    default:
      return kInputError;
  }
}

/// Output path with the final extension replaced by `suffix`.
inline std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  auto out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

struct SimulateArgs {
  std::filesystem::path config;  // empty: defaults
  std::filesystem::path output;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

/// Writes <output> (frames), <stem>.truth.json and <stem>.annotation.json.
inline int cmd_simulate(const SimulateArgs& args, std::ostream& err = std::cerr) {
  io::SimulationConfig cfg;
  if (!args.config.empty()) {
    std::ifstream in(args.config);
    if (!in) {
      err << "error: cannot open config " << args.config.string() << '\n';
      return kInputError;
    }
    cfg = io::parse_simulation_config(in);
  }
  cfg.validate();
  const std::uint64_t seed = args.seed.value_or(cfg.seed.value_or(1));
  io::FrameWriter writer(args.output, cfg.acquisition);
  const auto total = static_cast<std::uint64_t>(std::llround(cfg.script.duration * cfg.acquisition.fps));
  const auto t0 = std::chrono::steady_clock::now();
  auto truth = synth::synthesize_breathhold_session(
      cfg.script, cfg.physics, cfg.acquisition, seed,
      [&](Frame f) {
        writer.write(f.view());
        if (!args.quiet && writer.frame_count() % 600 == 0) {
          err << "simulate: " << writer.frame_count() << "/" << total << " frames\n";
        }
      },
      cfg.generator);
  writer.close();
  io::write_json_file(sibling(args.output, ".truth.json"), io::to_json(truth));
  io::write_json_file(sibling(args.output, ".annotation.json"), io::to_json(cfg.annotation()));
  if (!args.quiet) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    err << "simulate: wrote " << truth.frame_count << " frames in " << s << " s\n";
  }
  return kOk;
}

struct ProcessArgs {
  std::filesystem::path input;
  std::filesystem::path output;
  bool no_smooth = false;
  std::optional<TimeWindow> baseline_window;
  double smoothing_seconds = 2.0;
  bool quiet = false;
};

/// Streams a frame file into a trace CSV (one row per frame). Unless
/// no_smooth is set, a smoothed companion <stem>.smooth.csv is written too.
inline int cmd_process(const ProcessArgs& args, std::ostream& err = std::cerr) {
  io::FrameReader reader(args.input);
  TraceBuilder builder(reader.config());
  Frame frame;
  const auto t0 = std::chrono::steady_clock::now();
  while (reader.next(frame)) builder.push(frame.view());
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto trace = std::move(builder).finish();
  if (args.baseline_window) compute_baseline(trace, *args.baseline_window);

  auto write = [](const std::filesystem::path& p, const HemodynamicTrace& t) {
    std::ofstream out(p);
    if (!out) throw Error(ErrorCode::MalformedFile, "cannot write " + p.string());
    io::write_trace_csv(out, t);
    if (!out) throw Error(ErrorCode::MalformedFile, "write failed on " + p.string());
  };
  write(args.output, trace);
  if (!args.no_smooth) {
    const auto smooth = smooth_trace(trace.baseline ? normalize_trace(trace) : trace, args.smoothing_seconds);
    write(sibling(args.output, ".smooth.csv"), smooth);
  }
  if (!args.quiet) {
    const auto n = reader.frame_count();
    err << "process: " << n << " frames in " << seconds << " s ("
        << (seconds > 0 ? static_cast<double>(n) / seconds : 0.0) << " frames/s)\n";
  }
  return kOk;
}

struct ExtractArgs {
  std::filesystem::path trace;
  std::filesystem::path annotation;
  std::filesystem::path output;
  bool quiet = false;
};

/// Writes the feature JSON plus <stem>.hr.csv and <stem>.pulses.csv.
inline int cmd_extract(const ExtractArgs& args, std::ostream& err = std::cerr) {
  std::ifstream in(args.trace);
  if (!in) {
    err << "error: cannot open trace " << args.trace.string() << '\n';
    return kInputError;
  }
  const auto trace = io::read_trace_csv(in);
  const auto ann = io::annotation_from_json(io::read_json_file(args.annotation));
  const auto analysis = analyze_session_detailed(trace, ann);
  const auto& fs = analysis.features;
  io::write_json_file(args.output, io::to_json(fs));
  if (analysis.cardiac.heart_rate) {
    std::ofstream hr(sibling(args.output, ".hr.csv"));
    io::write_heart_rate_csv(hr, *analysis.cardiac.heart_rate);
  }
  std::ofstream pulses(sibling(args.output, ".pulses.csv"));
  io::write_pulse_csv(pulses, analysis.cardiac.segments);
  if (!args.quiet) {
    std::size_t invalid = 0;
    fs.for_each([&](std::string_view, const Feature& f) { invalid += f.valid ? 0 : 1; });
    err << "extract: " << args.output.string() << " (" << invalid << " invalid features)\n";
  }
  return kOk;
}

inline std::vector<std::string> default_report_features() {
  return {"t_bh",      "tau_growth", "tau_decay", "bfi_change",          "bvi_change",
          "bhi_f",     "bhi_v",      "bp_ratio",  "hr_rest",             "hr_max",
          "peak_lag",  "peaks_ratio_resting",     "peaks_ratio_bh",      "peaks_ratio_of_ratios"};
}

/// Parses "1,4,5,6-7" into score buckets.
inline std::vector<stats::ScoreBucket> parse_buckets(const std::string& spec) {
  std::vector<stats::ScoreBucket> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    try {
      stats::ScoreBucket b;
      b.lo = std::stoi(item.substr(0, dash));
      b.hi = dash == std::string::npos ? b.lo : std::stoi(item.substr(dash + 1));
      if (b.hi < b.lo) throw std::invalid_argument("range");
      out.push_back(b);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "bad score bucket '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::ParseError, "no score buckets given");
  return out;
}

struct CohortArgs {
  std::filesystem::path input_dir;
  std::filesystem::path output;  // prefix; .csv/.json/.txt/.boxplot.csv/.trend.csv appended
  std::vector<std::string> features = default_report_features();
  std::string trend_feature = "bp_ratio";
  std::vector<stats::ScoreBucket> buckets = stats::default_buckets();
  bool quiet = false;
};

namespace detail {

inline std::string box_row(const stats::BoxplotSummary& b) {
  std::string outliers;
  for (std::size_t i = 0; i < b.outliers.size(); ++i) {
    if (i) outliers += ';';
    outliers += io::format_double(b.outliers[i]);
  }
  return io::format_double(b.median) + ',' + io::format_double(b.q1) + ',' + io::format_double(b.q3) + ',' +
         io::format_double(b.whisker_low) + ',' + io::format_double(b.whisker_high) + ',' + outliers;
}

inline io::json report_json(const stats::TableReport& rep, const stats::TrendResult& trend) {
  using io::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  auto group = [&](const stats::GroupStats& g) { return json{{"n", g.n}, {"mean", num(g.mean)}, {"sd", num(g.sd)}}; };
  json rows = json::array();
  for (const auto& r : rep.rows) {
    json row{{"feature", r.feature}, {"low_risk", group(r.low)}, {"higher_risk", group(r.high)}};
    if (r.result) {
      row["t"] = num(r.result->t);
      row["df"] = num(r.result->df);
      row["p"] = num(r.result->p);
      row["significance"] = std::string(r.result->stars);
    }
    if (!r.error.empty()) row["error"] = r.error;
    rows.push_back(std::move(row));
  }
  return {{"n_low_risk", rep.n_low},
          {"n_higher_risk", rep.n_high},
          {"n_excluded", rep.n_excluded},
          {"rows", rows},
          {"trend", {{"feature", trend.feature}, {"spearman_rho", num(trend.spearman_rho)}, {"n", trend.n}}}};
}

}  // namespace detail

/// Loads every feature-set JSON in a directory (files without a
/// "features" object are skipped), sorted by file name.
inline std::vector<FeatureSet> load_feature_sets(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::MalformedFile, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FeatureSet> out;
  for (const auto& f : files) {
    const auto j = io::read_json_file(f);
    if (!j.is_object() || !j.contains("features")) continue;
    try {
      out.push_back(io::feature_set_from_json(j));
    } catch (const Error& e) {
      std::string_view what = e.what();
      what.remove_prefix(std::min(what.size(), to_string(e.code()).size() + 2));
      throw Error(e.code(), f.string() + ": " + std::string(what));
    }
  }
  return out;
}

/// Table report, box-plot data and subgroup trend for a cohort.
inline int cmd_cohort(const CohortArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const auto sessions = load_feature_sets(args.input_dir);
  const auto records = stats::aggregate_subjects(sessions);
  const auto groups = stats::assign_groups(records);
  const auto report = stats::table_report(records, args.features);
  const auto trend = stats::subgroup_trend(records, args.trend_feature, args.buckets);

  auto prefix = args.output;
  if (prefix.extension() == ".csv" || prefix.extension() == ".json" || prefix.extension() == ".txt") prefix.replace_extension();
  auto with = [&](const char* suffix) {
    auto p = prefix;
    p += suffix;
    return p;
  };
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p);
    if (!f) throw Error(ErrorCode::MalformedFile, "cannot write " + p.string());
    f << text;
  };

  std::ostringstream trend_txt;
  trend_txt << "\nsubgroup trend of " << trend.feature << " (Spearman rho = " << io::format_double(trend.spearman_rho)
            << ", n = " << trend.n << ")\n";
  std::ostringstream trend_csv;
  trend_csv << "feature,bucket,n,median,q1,q3,whisker_low,whisker_high,outliers,error\n";
  for (const auto& b : trend.buckets) {
    trend_txt << "  score " << b.bucket.label() << ": n = " << b.n;
    trend_csv << trend.feature << ',' << b.bucket.label() << ',' << b.n << ',';
    if (b.box) {
      trend_txt << ", median = " << io::format_double(b.box->median);
      trend_csv << detail::box_row(*b.box) << ',';
    } else {
      trend_txt << " (" << to_string(*b.error) << ")";
      trend_csv << ",,,,,," << to_string(*b.error);
    }
    trend_txt << '\n';
    trend_csv << '\n';
  }
  trend_csv << "# spearman_rho," << io::format_double(trend.spearman_rho) << '\n';

  std::ostringstream box_csv;
  box_csv << "feature,group,n,median,q1,q3,whisker_low,whisker_high,outliers\n";
  for (const auto& f : args.features) {
    for (const auto& [name, members] : {std::pair{"low_risk", &groups.low_risk}, std::pair{"higher_risk", &groups.higher_risk}}) {
      const auto v = stats::feature_values(*members, f);
      box_csv << f << ',' << name << ',' << v.size() << ',';
      box_csv << (v.size() >= 4 ? detail::box_row(stats::boxplot_summary(v)) : std::string(",,,,,")) << '\n';
    }
  }

  const auto text = stats::report_text(report) + trend_txt.str();
  write(with(".csv"), stats::report_csv(report));
  write(with(".txt"), text);
  write(with(".boxplot.csv"), box_csv.str());
  write(with(".trend.csv"), trend_csv.str());
  io::write_json_file(with(".json"), detail::report_json(report, trend));
  if (!args.quiet) out << text;

  if (groups.low_risk.empty() || groups.higher_risk.empty()) {
    err << "error: " << to_string(ErrorCode::EmptyGroup) << ": low-risk n = " << groups.low_risk.size()
        << ", higher-risk n = " << groups.higher_risk.size() << " (excluded " << groups.excluded.size() << ")\n";
    return kInsufficientData;
  }
  return kOk;
}

}  // namespace scos::cli
