#pragma once

#include <optional>
#include <string>

#include "scos/error.hpp"

namespace scos {

/// Timing and identity of one breath-hold recording.
struct BreathHoldAnnotation {
  double t_start = 60.0;  // s
  double t_bh = 35.0;     // hold duration, s
  std::string subject_id;
  std::string session_id;
  std::optional<int> risk_score;  // decile 1-10

  double t_end() const noexcept { return t_start + t_bh; }

  /// Checks the protocol constraints; `duration` is the recording length.
  void validate(double duration) const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::AnnotationOutOfRange, m); };
    if (!(t_start >= 30)) fail("t_start must be >= 30 s");
    if (!(t_bh >= 5 && t_bh <= 120)) fail("t_bh must lie in [5, 120] s");
    if (!(t_start + t_bh < duration - 10)) {
      fail("breath-hold ends at " + std::to_string(t_end()) + " s, within 10 s of the end (" +
           std::to_string(duration) + " s)");
    }
    if (risk_score && (*risk_score < 1 || *risk_score > 10)) fail("risk_score must lie in 1-10");
  }
};

}  // namespace scos
