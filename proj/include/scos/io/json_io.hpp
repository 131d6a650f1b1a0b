#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "scos/annotation.hpp"
#include "scos/breathhold.hpp"
#include "scos/error.hpp"
#include "scos/synth/session.hpp"

namespace scos::io {

using nlohmann::json;

namespace detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_at(const json& j, std::string_view key, bool required = true) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw Error(ErrorCode::ParseError, "missing number '" + std::string(key) + "'");
    return kNaN;
  }
  if (!it->is_number()) throw Error(ErrorCode::ParseError, "'" + std::string(key) + "' must be a number");
  return it->get<double>();
}

inline std::string string_at(const json& j, std::string_view key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorCode::ParseError, "'" + std::string(key) + "' must be a string");
  return it->get<std::string>();
}

inline std::optional<int> score_at(const json& j) {
  const auto it = j.find("risk_score");
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw Error(ErrorCode::ParseError, "'risk_score' must be an integer");
  return it->get<int>();
}

}  // namespace detail

inline json to_json(const BreathHoldAnnotation& a) {
  return {{"t_start_s", a.t_start},
          {"t_bh_s", a.t_bh},
          {"subject_id", a.subject_id},
          {"session_id", a.session_id},
          {"risk_score", a.risk_score ? json(*a.risk_score) : json(nullptr)}};
}

inline BreathHoldAnnotation annotation_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "annotation must be a JSON object");
  BreathHoldAnnotation a;
  a.t_start = detail::number_at(j, "t_start_s");
  a.t_bh = detail::number_at(j, "t_bh_s");
  a.subject_id = detail::string_at(j, "subject_id");
  a.session_id = detail::string_at(j, "session_id");
  a.risk_score = detail::score_at(j);
  return a;
}

inline json to_json(const Feature& f) {
  json j{{"value", detail::number_or_null(f.value)}, {"valid", f.valid}};
  if (!f.error.empty()) j["error"] = f.error;
  return j;
}

inline json to_json(const FeatureSet& fs) {
  json features = json::object();
  fs.for_each([&](std::string_view name, const Feature& f) { features[std::string(name)] = to_json(f); });
  return {{"subject_id", fs.subject_id},
          {"session_id", fs.session_id},
          {"risk_score", fs.risk_score ? json(*fs.risk_score) : json(nullptr)},
          {"features", features},
          {"intermediate",
           {{"t_start_s", detail::number_or_null(fs.t_start)},
            {"bfi_0", detail::number_or_null(fs.bfi_0)},
            {"intensity_0", detail::number_or_null(fs.intensity_0)},
            {"bfi_max", detail::number_or_null(fs.bfi_max)},
            {"bvi_max", detail::number_or_null(fs.bvi_max)},
            {"t_bvi_max", detail::number_or_null(fs.t_bvi_max)},
            {"t_return", detail::number_or_null(fs.t_return)},
            {"fit_quality_growth", detail::number_or_null(fs.fit_quality_growth)},
            {"fit_quality_decay", detail::number_or_null(fs.fit_quality_decay)},
            {"n_pulses_resting", fs.n_pulses_resting},
            {"n_pulses_bh", fs.n_pulses_bh}}}};
}

inline FeatureSet feature_set_from_json(const json& j) {
  if (!j.is_object() || !j.contains("features") || !j["features"].is_object()) {
    throw Error(ErrorCode::ParseError, "feature set needs a 'features' object");
  }
  FeatureSet fs;
  fs.subject_id = detail::string_at(j, "subject_id");
  fs.session_id = detail::string_at(j, "session_id");
  fs.risk_score = detail::score_at(j);
  const auto& feats = j["features"];
  fs.for_each([&](std::string_view name, Feature& f) {
    const auto it = feats.find(name);
    if (it == feats.end()) return;
    if (!it->is_object()) throw Error(ErrorCode::ParseError, "feature '" + std::string(name) + "' must be an object");
    f.value = detail::number_at(*it, "value", false);
    const auto v = it->find("valid");
    if (v == it->end() || !v->is_boolean()) {
      throw Error(ErrorCode::ParseError, "feature '" + std::string(name) + "' needs a boolean 'valid'");
    }
    f.valid = v->get<bool>() && std::isfinite(f.value);
    f.error = detail::string_at(*it, "error");
  });
  if (const auto it = j.find("intermediate"); it != j.end() && it->is_object()) {
    const auto& m = *it;
    fs.t_start = detail::number_at(m, "t_start_s", false);
    fs.bfi_0 = detail::number_at(m, "bfi_0", false);
    fs.intensity_0 = detail::number_at(m, "intensity_0", false);
    fs.bfi_max = detail::number_at(m, "bfi_max", false);
    fs.bvi_max = detail::number_at(m, "bvi_max", false);
    fs.t_bvi_max = detail::number_at(m, "t_bvi_max", false);
    fs.t_return = detail::number_at(m, "t_return", false);
    fs.fit_quality_growth = detail::number_at(m, "fit_quality_growth", false);
    fs.fit_quality_decay = detail::number_at(m, "fit_quality_decay", false);
    fs.n_pulses_resting = m.value("n_pulses_resting", std::size_t{0});
    fs.n_pulses_bh = m.value("n_pulses_bh", std::size_t{0});
  }
  return fs;
}

inline json to_json(const AcquisitionConfig& c) {
  return {{"fps", c.fps},         {"bit_depth", c.bit_depth},     {"gain", c.gain},
          {"read_noise", c.read_noise}, {"dark_offset", c.dark_offset}, {"exposure", c.exposure},
          {"roi_width", c.roi_width},   {"roi_height", c.roi_height}};
}

inline json to_json(const synth::SpecklePhysics& p) {
  return {{"tau_c", p.tau_c}, {"beta", p.beta}, {"speckle_px", p.speckle_px}, {"mean_e", p.mean_e}};
}

inline json to_json(const synth::SessionScript& s) {
  return {{"duration", s.duration},
          {"t_start", s.t_start},
          {"t_bh", s.t_bh},
          {"flow_change", s.flow_change},
          {"volume_change", s.volume_change},
          {"tau_growth", s.tau_growth},
          {"tau_decay", s.tau_decay},
          {"peak_delay", s.peak_delay},
          {"onset_ramp", s.onset_ramp},
          {"volume_lag", s.volume_lag},
          {"hr_rest", s.hr_rest},
          {"hr_peak", s.hr_peak},
          {"pulse_amplitude", s.pulse_amplitude},
          {"volume_pulse_amplitude", s.volume_pulse_amplitude},
          {"pulse", {{"p1", s.pulse.p1}, {"p2", s.pulse.p2}, {"p3", s.pulse.p3}}}};
}

inline json to_json(const synth::GroundTruth& g) {
  return {{"seed", g.seed},
          {"frame_count", g.frame_count},
          {"script", to_json(g.script)},
          {"physics", to_json(g.physics)},
          {"acquisition", to_json(g.config)},
          {"calibrated_beta", g.calibrated_beta},
          {"baseline_k_adj_sq", g.baseline_k_sq},
          {"bfi_change_pct", g.bfi_change_pct},
          {"bvi_change_pct", g.bvi_change_pct},
          {"bhi_f", g.bhi_f},
          {"bhi_v", g.bhi_v},
          {"bp_ratio", g.bp_ratio},
          {"t_flow_max", g.t_flow_max},
          {"t_volume_max", g.t_volume_max},
          {"peak_lag", g.peak_lag},
          {"pulse_onsets", g.pulse_onsets},
          {"frames", {{"t", g.t}, {"flow", g.flow}, {"volume", g.volume}, {"hr", g.hr}}}};
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MalformedFile, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::MalformedFile, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::MalformedFile, "write failed on " + path.string());
}

}  // namespace scos::io
