#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "scos/acquisition.hpp"
#include "scos/error.hpp"

namespace scos {

/// Adjusted contrast at or below this value is treated as over-corrected and
/// the sample is invalid.
inline constexpr double kEpsilonContrast = 1e-4;

/// First and second moments of a frame, in raw ADU.
struct FrameMoments {
  double mean = 0.0;
  double variance = 0.0;  // population variance (divisor N)
};

inline FrameMoments frame_moments(const FrameView& frame) {
  const auto n = frame.samples.size();
  if (n == 0) throw Error(ErrorCode::DimensionMismatch, "empty frame");
  // Exact integer accumulation: 16-bit samples, squares fit in 32 bits.
  std::uint64_t sum = 0;
  std::uint64_t sum_sq = 0;
  for (const std::uint16_t s : frame.samples) {
    const std::uint32_t v = s;
    sum += v;
    sum_sq += std::uint64_t{v * v};
  }
  using u128 = unsigned __int128;
  const u128 scaled_var = u128{n} * sum_sq - u128{sum} * sum;  // N^2 * var
  const double nd = static_cast<double>(n);
  return {static_cast<double>(sum) / nd, static_cast<double>(scaled_var) / (nd * nd)};
}

inline void check_dimensions(const FrameView& frame, const AcquisitionConfig& config) {
  if (frame.width != config.roi_width || frame.height != config.roi_height ||
      frame.samples.size() != config.pixel_count()) {
    throw Error(ErrorCode::DimensionMismatch,
                "frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                    ", config expects " + std::to_string(config.roi_width) + "x" +
                    std::to_string(config.roi_height));
  }
}

/// Squared raw speckle contrast sigma^2/mu^2 over the full ROI, with the mean
/// taken after dark-offset subtraction.
inline double compute_raw_contrast(const FrameView& frame, const AcquisitionConfig& config) {
  check_dimensions(frame, config);
  const auto m = frame_moments(frame);
  const double mu = m.mean - config.dark_offset;
  if (!(mu > 0)) throw Error(ErrorCode::ZeroMeanFrame, "dark-corrected mean " + std::to_string(mu));
  return m.variance / (mu * mu);
}

/// Which camera noise terms are removed from the raw contrast.
struct NoiseModel {
  bool shot = true;
  bool read = true;
  bool quantization = true;

  static constexpr NoiseModel none() { return {false, false, false}; }
};

/// Individual noise contributions to K^2 at a given mean signal.
struct NoiseTerms {
  double shot = 0.0;
  double read = 0.0;
  double quantization = 0.0;

  double total() const noexcept { return shot + read + quantization; }
};

inline NoiseTerms noise_terms(double mean_adu, const AcquisitionConfig& config,
                              NoiseModel model = {}) {
  const double mu_adu = mean_adu - config.dark_offset;
  if (!(mu_adu > 0)) {
    throw Error(ErrorCode::ZeroMeanFrame, "dark-corrected mean " + std::to_string(mu_adu));
  }
  const double mu_e = mu_adu * config.gain;
  NoiseTerms t;
  if (model.shot) t.shot = 1.0 / mu_e;
  if (model.read) t.read = config.read_noise * config.read_noise / (mu_e * mu_e);
  if (model.quantization) t.quantization = config.gain * config.gain / (12.0 * mu_e * mu_e);
  return t;
}

/// K_adjusted^2 = K_raw^2 - K_shot^2 - K_read^2 - K_quant^2. May be <= 0;
/// that is flagged by compute_bfi, not here.
inline double correct_contrast(double k_raw_sq, double mean_adu, const AcquisitionConfig& config,
                               NoiseModel model = {}) {
  return k_raw_sq - noise_terms(mean_adu, config, model).total();
}

inline std::optional<double> try_compute_bfi(double k_adj_sq) noexcept {
  if (!(k_adj_sq > kEpsilonContrast)) return std::nullopt;
  return 1.0 / k_adj_sq;
}

/// BFI = 1 / K_adjusted^2.
inline double compute_bfi(double k_adj_sq) {
  if (auto bfi = try_compute_bfi(k_adj_sq)) return *bfi;
  throw Error(ErrorCode::ContrastUnderflow, "K_adjusted^2 = " + std::to_string(k_adj_sq));
}

/// BVI = I_0 / I with both intensities dark-corrected.
inline double compute_bvi(double mean_adu, double baseline_intensity,
                          const AcquisitionConfig& config) {
  const double num = baseline_intensity - config.dark_offset;
  const double den = mean_adu - config.dark_offset;
  if (!(den > 0)) throw Error(ErrorCode::ZeroMeanFrame, "mean at or below dark offset");
  if (!(num > 0)) throw Error(ErrorCode::ZeroMeanFrame, "baseline at or below dark offset");
  return num / den;
}

}  // namespace scos
