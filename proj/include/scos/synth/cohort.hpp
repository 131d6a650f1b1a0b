#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scos/breathhold.hpp"
#include "scos/synth/rng.hpp"

namespace scos::synth {

/// Gaussian generating parameters of one feature in both risk groups.
struct GroupParameters {
  std::string feature;
  double mean_low, sd_low;
  double mean_high, sd_high;
};

/// Group means and standard deviations of the clinical breath-hold cohort
/// (low risk: score 1; higher risk: score >= 4).
inline std::vector<GroupParameters> reference_group_parameters() {
  return {
      {"t_bh", 35, 12, 34, 13},
      {"tau_growth", 16.3, 8.6, 15.0, 8.3},
      {"tau_decay", 8.0, 6.1, 12.1, 17.5},
      {"bfi_change", 44, 16, 63, 25},
      {"bvi_change", 20, 14, 9, 8},
      {"bhi_f", 1.36, 0.57, 2.26, 1.62},
      {"bhi_v", 0.62, 0.49, 0.32, 0.30},
      {"bp_ratio", 1.21, 0.10, 1.50, 0.23},
      {"hr_rest", 68, 9, 66, 8},
      {"hr_max", 84, 10, 76, 10},
      {"peak_lag", 1.4, 2.3, 1.0, 2.6},
      {"peaks_ratio_resting", 0.84, 0.13, 1.05, 0.23},
      {"peaks_ratio_bh", 1.04, 0.14, 1.22, 0.23},
      {"peaks_ratio_of_ratios", 1.24, 0.08, 1.18, 0.11},
  };
}

/// Number of subjects per risk score.
struct CohortLayout {
  std::vector<std::pair<int, std::size_t>> score_counts{{1, 25}, {4, 6}, {5, 10}, {6, 5}, {7, 4}};
};

/// One synthetic session per subject; every listed feature is drawn
/// independently from its group's Gaussian. Deterministic in `seed`.
inline std::vector<FeatureSet> generate_cohort(const std::vector<GroupParameters>& params,
                                               const CohortLayout& layout, std::uint64_t seed) {
  std::vector<FeatureSet> out;
  std::uint64_t subject = 0;
  for (const auto& [score, count] : layout.score_counts) {
    for (std::size_t k = 0; k < count; ++k, ++subject) {
      FeatureSet fs;
      fs.subject_id = "S" + std::to_string(subject + 1);
      fs.session_id = fs.subject_id + "-1";
      fs.risk_score = score;
      auto rng = CounterRng::for_stream(seed, 0xc0407, subject);
      for (const auto& p : params) {
        const double z = standard_normal(rng);
        const bool low = score == 1;
        const double v = low ? p.mean_low + p.sd_low * z : p.mean_high + p.sd_high * z;
        fs.for_each([&](std::string_view name, Feature& f) {
          if (name == p.feature) f = Feature::ok(v);
        });
      }
      out.push_back(std::move(fs));
    }
  }
  return out;
}

}  // namespace scos::synth
