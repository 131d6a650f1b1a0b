#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include "scos/annotation.hpp"
#include "scos/error.hpp"
#include "scos/synth/session.hpp"

namespace scos::io {

/// Everything `simulate` needs, with defaults for a 180 s session.
struct SimulationConfig {
  AcquisitionConfig acquisition;
  synth::SpecklePhysics physics;
  synth::SessionScript script;
  synth::GeneratorOptions generator;
  std::string subject_id = "synthetic";
  std::string session_id = "1";
  std::optional<int> risk_score;
  std::optional<std::uint64_t> seed;

  BreathHoldAnnotation annotation() const {
    return {script.t_start, script.t_bh, subject_id, session_id, risk_score};
  }

  /// Throws InvalidConfig, InvalidPhysics or InvalidScript.
  void validate() const {
    acquisition.validate();
    physics.validate();
    script.validate();
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view v, std::size_t line, std::string_view key) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": '" + std::string(key) +
                                           "' expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

}  // namespace detail

/// Parses flat `key = value` text with '#' comments into a
/// SimulationConfig. Unknown keys, duplicates and malformed values throw
/// ParseError naming the line. Range checks are left to validate().
inline SimulationConfig parse_simulation_config(std::istream& in) {
  SimulationConfig c;
  using Setter = std::function<void(std::string_view, std::size_t, std::string_view)>;
  auto real = [](double& field) -> Setter {
    return [&field](std::string_view v, std::size_t l, std::string_view k) { field = detail::parse_number<double>(v, l, k); };
  };
  auto uint = [](auto& field) -> Setter {
    return [&field](std::string_view v, std::size_t l, std::string_view k) {
      field = detail::parse_number<std::remove_reference_t<decltype(field)>>(v, l, k);
    };
  };
  auto text = [](std::string& field) -> Setter {
    return [&field](std::string_view v, std::size_t, std::string_view) { field = std::string(v); };
  };
  const std::map<std::string, Setter, std::less<>> keys{
      {"fps", real(c.acquisition.fps)},
      {"bit_depth", uint(c.acquisition.bit_depth)},
      {"gain", real(c.acquisition.gain)},
      {"read_noise", real(c.acquisition.read_noise)},
      {"dark_offset", real(c.acquisition.dark_offset)},
      {"exposure", real(c.acquisition.exposure)},
      {"roi_width", uint(c.acquisition.roi_width)},
      {"roi_height", uint(c.acquisition.roi_height)},
      {"tau_c", real(c.physics.tau_c)},
      {"beta", real(c.physics.beta)},
      {"speckle_px", real(c.physics.speckle_px)},
      {"mean_e", real(c.physics.mean_e)},
      {"duration", real(c.script.duration)},
      {"t_start", real(c.script.t_start)},
      {"t_bh", real(c.script.t_bh)},
      {"flow_change", real(c.script.flow_change)},
      {"volume_change", real(c.script.volume_change)},
      {"tau_growth", real(c.script.tau_growth)},
      {"tau_decay", real(c.script.tau_decay)},
      {"peak_delay", real(c.script.peak_delay)},
      {"onset_ramp", real(c.script.onset_ramp)},
      {"volume_lag", real(c.script.volume_lag)},
      {"hr_rest", real(c.script.hr_rest)},
      {"hr_peak", real(c.script.hr_peak)},
      {"pulse_amplitude", real(c.script.pulse_amplitude)},
      {"volume_pulse_amplitude", real(c.script.volume_pulse_amplitude)},
      {"p1", real(c.script.pulse.p1)},
      {"p2", real(c.script.pulse.p2)},
      {"p3", real(c.script.pulse.p3)},
      {"substeps_per_tau", real(c.generator.substeps_per_tau)},
      {"min_substeps", uint(c.generator.min_substeps)},
      {"threads", uint(c.generator.threads)},
      {"subject_id", text(c.subject_id)},
      {"session_id", text(c.session_id)},
      {"risk_score",
       [&c](std::string_view v, std::size_t l, std::string_view k) { c.risk_score = detail::parse_number<int>(v, l, k); }},
      {"seed",
       [&c](std::string_view v, std::size_t l, std::string_view k) { c.seed = detail::parse_number<std::uint64_t>(v, l, k); }},
  };

  std::map<std::string, std::size_t, std::less<>> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": expected 'key = value'");
    }
    const auto key = detail::trim(s.substr(0, eq));
    const auto value = detail::trim(s.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": unknown key '" + std::string(key) + "'");
    }
    if (const auto dup = seen.find(key); dup != seen.end()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": '" + std::string(key) +
                                             "' already set on line " + std::to_string(dup->second));
    }
    if (value.empty()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": '" + std::string(key) + "' has no value");
    }
    seen.emplace(std::string(key), line);
    it->second(value, line, key);
  }
  return c;
}

}  // namespace scos::io
