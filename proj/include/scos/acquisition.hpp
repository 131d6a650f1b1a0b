#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scos/error.hpp"

namespace scos {

/// Camera and acquisition parameters. Defaults follow the board-camera setup
/// used for forehead recordings: 60 fps global shutter, 12-bit samples.
struct AcquisitionConfig {
  double fps = 60.0;
  unsigned bit_depth = 12;
  double gain = 1.0;         // photoelectrons per ADU
  double read_noise = 3.0;   // photoelectrons RMS
  double dark_offset = 100;  // ADU
  double exposure = 0.002;   // seconds
  std::uint32_t roi_width = 256;
  std::uint32_t roi_height = 256;

  std::size_t pixel_count() const noexcept {
    return std::size_t{roi_width} * std::size_t{roi_height};
  }
  std::uint32_t max_sample() const noexcept {
    return static_cast<std::uint32_t>((std::uint64_t{1} << bit_depth) - 1);
  }

  /// Throws Error{InvalidConfig} naming the first offending field.
  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw Error(ErrorCode::InvalidConfig, field + " " + why);
    };
    if (!(std::isfinite(fps) && fps > 0)) fail("fps", "must be > 0");
    if (bit_depth < 1 || bit_depth > 16) fail("bit_depth", "must be in [1, 16]");
    if (!(std::isfinite(gain) && gain > 0)) fail("gain", "must be > 0");
    if (!(std::isfinite(read_noise) && read_noise >= 0)) fail("read_noise", "must be >= 0");
    if (!(std::isfinite(dark_offset) && dark_offset >= 0)) fail("dark_offset", "must be >= 0");
    if (!(std::isfinite(exposure) && exposure > 0)) fail("exposure", "must be > 0");
    if (exposure * fps > 1.0 + 1e-12) fail("exposure", "must not exceed the frame period 1/fps");
    if (roi_width < 16) fail("roi_width", "must be >= 16");
    if (roi_height < 16) fail("roi_height", "must be >= 16");
  }
};

/// Non-owning view of one monochrome frame in row-major ADU.
struct FrameView {
  std::span<const std::uint16_t> samples;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  double timestamp = 0.0;
};

struct Frame {
  std::vector<std::uint16_t> samples;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  double timestamp = 0.0;

  Frame() = default;
  Frame(std::uint32_t w, std::uint32_t h, double t = 0.0)
      : samples(std::size_t{w} * h, 0), width(w), height(h), timestamp(t) {}

  FrameView view() const noexcept { return {samples, width, height, timestamp}; }
  std::uint16_t& at(std::uint32_t row, std::uint32_t col) {
    return samples[std::size_t{row} * width + col];
  }
};

/// In-memory frame sequence with its acquisition metadata.
struct FrameStream {
  AcquisitionConfig config;
  std::vector<Frame> frames;
};

}  // namespace scos
