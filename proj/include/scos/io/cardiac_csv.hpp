#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "scos/cardiac.hpp"
#include "scos/io/trace_csv.hpp"

namespace scos::io {

inline void write_heart_rate_csv(std::ostream& os, const HeartRateTrace& hr) {
  os << "t_s,hr_bpm,confidence,valid\n";
  for (const auto& s : hr.samples) {
    os << format_double(s.t) << ',' << format_double(s.hr) << ',' << format_double(s.confidence) << ','
       << (s.valid ? '1' : '0') << '\n';
  }
}

/// One row per segmented pulse. Absent peaks leave their cells empty.
inline void write_pulse_csv(std::ostream& os, const std::vector<PulseSegment>& segments) {
  os << "t_onset_s,t_end_s,p1_t_s,p1_height,p2_t_s,p2_height,p3_t_s,p3_height,notch_t_s,notch_height\n";
  auto cell = [&](const std::optional<PulseFeature>& f) {
    if (f) {
      os << ',' << format_double(f->t) << ',' << format_double(f->height);
    } else {
      os << ",,";
    }
  };
  for (const auto& s : segments) {
    os << format_double(s.t_onset) << ',' << format_double(s.t_end);
    cell(s.p1);
    cell(s.p2);
    cell(s.p3);
    cell(s.notch);
    os << '\n';
  }
}

}  // namespace scos::io
