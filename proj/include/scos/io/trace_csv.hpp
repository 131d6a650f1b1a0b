#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "scos/error.hpp"
#include "scos/trace.hpp"

namespace scos::io {

inline constexpr std::string_view kTraceColumns = "t_s,mean_adu,k_raw_sq,k_adj_sq,bfi,bvi,valid";

/// Shortest decimal that round-trips; NaN becomes an empty string.
inline std::string format_double(double v) {
  if (std::isnan(v)) return {};
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Parses a full-field double; empty means NaN.
inline double parse_double(std::string_view s, std::size_t line, std::string_view what) {
  if (s.empty()) return kNaN;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad " + std::string(what) +
                                           " value '" + std::string(s) + "'");
  }
  return v;
}

/// Trace CSV: a '#' metadata line, the header row, one row per frame.
/// Invalid samples have valid=0 and an empty bfi cell.
inline void write_trace_csv(std::ostream& os, const HemodynamicTrace& trace) {
  os << "# scos-trace fps=" << format_double(trace.fps) << " dark_offset=" << format_double(trace.dark_offset)
     << " normalized=" << (trace.normalized ? 1 : 0) << " smoothing=" << format_double(trace.smoothing_window);
  if (trace.baseline) {
    const auto& b = *trace.baseline;
    os << " baseline_t0=" << format_double(b.window.t0) << " baseline_t1=" << format_double(b.window.t1)
       << " baseline_bfi=" << format_double(b.bfi) << " baseline_intensity=" << format_double(b.intensity);
  }
  os << '\n' << kTraceColumns << '\n';
  for (const auto& s : trace.samples) {
    os << format_double(s.t) << ',' << format_double(s.mean_adu) << ',' << format_double(s.k_raw_sq) << ','
       << format_double(s.k_adj_sq) << ',' << (s.valid ? format_double(s.bfi) : std::string()) << ','
       << format_double(s.bvi) << ',' << (s.valid ? '1' : '0') << '\n';
  }
}

inline HemodynamicTrace read_trace_csv(std::istream& is) {
  HemodynamicTrace trace;
  std::map<std::string, double, std::less<>> meta;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (have_header) continue;
      std::istringstream ls(line.substr(1));
      std::string tok;
      while (ls >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        meta[tok.substr(0, eq)] = parse_double(std::string_view(tok).substr(eq + 1), lineno, tok.substr(0, eq));
      }
      continue;
    }
    if (!have_header) {
      if (line != kTraceColumns) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected header '" +
                                               std::string(kTraceColumns) + "'");
      }
      have_header = true;
      continue;
    }
    std::array<std::string_view, 7> cells;
    std::string_view rest = line;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto comma = rest.find(',');
      if ((comma == std::string_view::npos) != (c + 1 == cells.size())) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 7 columns");
      }
      cells[c] = rest.substr(0, comma);
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
    TraceSample s;
    s.t = parse_double(cells[0], lineno, "t_s");
    s.mean_adu = parse_double(cells[1], lineno, "mean_adu");
    s.k_raw_sq = parse_double(cells[2], lineno, "k_raw_sq");
    s.k_adj_sq = parse_double(cells[3], lineno, "k_adj_sq");
    s.bfi = parse_double(cells[4], lineno, "bfi");
    s.bvi = parse_double(cells[5], lineno, "bvi");
    if (cells[6] != "0" && cells[6] != "1") {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": valid must be 0 or 1");
    }
    s.valid = cells[6] == "1";
    if (std::isnan(s.t)) throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": missing t_s");
    if (s.valid && !(s.bfi > 0)) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": valid row needs bfi > 0");
    }
    if (!trace.samples.empty() && !(s.t > trace.samples.back().t)) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": timestamps must increase");
    }
    trace.samples.push_back(s);
  }
  if (!have_header) throw Error(ErrorCode::ParseError, "missing CSV header row");
  if (trace.samples.size() < 2 && !meta.count("fps")) {
    throw Error(ErrorCode::ParseError, "cannot infer fps from fewer than two rows");
  }

  auto get = [&](std::string_view k) -> std::optional<double> {
    const auto it = meta.find(k);
    if (it == meta.end()) return std::nullopt;
    return it->second;
  };
  trace.fps = get("fps").value_or(0.0);
  if (!(trace.fps > 0)) {
    const double span = trace.samples.back().t - trace.samples.front().t;
    trace.fps = static_cast<double>(trace.samples.size() - 1) / span;
  }
  trace.dark_offset = get("dark_offset").value_or(0.0);
  trace.normalized = get("normalized").value_or(0.0) != 0.0;
  trace.smoothing_window = get("smoothing").value_or(0.0);
  if (auto b = get("baseline_bfi")) {
    Baseline base;
    base.bfi = *b;
    base.intensity = get("baseline_intensity").value_or(kNaN);
    base.window = {get("baseline_t0").value_or(kNaN), get("baseline_t1").value_or(kNaN)};
    trace.baseline = base;
  }
  return trace;
}

}  // namespace scos::io
