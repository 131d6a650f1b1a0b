#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "scos/acquisition.hpp"
#include "scos/error.hpp"

namespace scos::io {

// Frame file layout, all fields little-endian:
//   0  char[4]  magic "SCOS"
//   4  u16      format version
//   6  u32      width
//  10  u32      height
//  14  f64      fps
//  22  u16      bit depth
//  24  f64      gain (e-/ADU)
//  32  f64      read noise (e-)
//  40  f64      dark offset (ADU)
//  48  f64      exposure (s)
//  56  u64      frame count
//  64  frames, row-major u16 samples
inline constexpr std::size_t kHeaderSize = 64;
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::array<char, 4> kMagic{'S', 'C', 'O', 'S'};

struct FrameFileHeader {
  AcquisitionConfig config;
  std::uint64_t frame_count = 0;

  std::uint64_t frame_bytes() const { return config.pixel_count() * 2; }
  std::uint64_t expected_size() const { return kHeaderSize + frame_count * frame_bytes(); }
};

namespace detail {

template <class T>
void put_le(unsigned char* dst, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  std::memcpy(dst, bits.data(), sizeof(T));
}

template <class T>
T get_le(const unsigned char* src) {
  std::array<unsigned char, sizeof(T)> bits;
  std::memcpy(bits.data(), src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

inline void swap_samples_if_big_endian([[maybe_unused]] std::uint16_t* p, [[maybe_unused]] std::size_t n) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::uint16_t>((p[i] >> 8) | (p[i] << 8));
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw Error(ErrorCode::MalformedFile, "cannot open " + path.string());
  return f;
}

}  // namespace detail

inline std::array<unsigned char, kHeaderSize> encode_header(const FrameFileHeader& h) {
  std::array<unsigned char, kHeaderSize> b{};
  std::memcpy(b.data(), kMagic.data(), 4);
  const auto& c = h.config;
  detail::put_le<std::uint16_t>(b.data() + 4, kFormatVersion);
  detail::put_le<std::uint32_t>(b.data() + 6, c.roi_width);
  detail::put_le<std::uint32_t>(b.data() + 10, c.roi_height);
  detail::put_le<double>(b.data() + 14, c.fps);
  detail::put_le<std::uint16_t>(b.data() + 22, static_cast<std::uint16_t>(c.bit_depth));
  detail::put_le<double>(b.data() + 24, c.gain);
  detail::put_le<double>(b.data() + 32, c.read_noise);
  detail::put_le<double>(b.data() + 40, c.dark_offset);
  detail::put_le<double>(b.data() + 48, c.exposure);
  detail::put_le<std::uint64_t>(b.data() + 56, h.frame_count);
  return b;
}

/// Parses and validates a header. Throws MalformedFile.
inline FrameFileHeader decode_header(const unsigned char* b, std::size_t n) {
  if (n < kHeaderSize) {
    throw Error(ErrorCode::MalformedFile, "header truncated: " + std::to_string(n) + " of " +
                                              std::to_string(kHeaderSize) + " bytes");
  }
  if (std::memcmp(b, kMagic.data(), 4) != 0) throw Error(ErrorCode::MalformedFile, "bad magic at byte offset 0");
  const auto version = detail::get_le<std::uint16_t>(b + 4);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::MalformedFile, "unsupported format version " + std::to_string(version));
  }
  FrameFileHeader h;
  auto& c = h.config;
  c.roi_width = detail::get_le<std::uint32_t>(b + 6);
  c.roi_height = detail::get_le<std::uint32_t>(b + 10);
  c.fps = detail::get_le<double>(b + 14);
  c.bit_depth = detail::get_le<std::uint16_t>(b + 22);
  c.gain = detail::get_le<double>(b + 24);
  c.read_noise = detail::get_le<double>(b + 32);
  c.dark_offset = detail::get_le<double>(b + 40);
  c.exposure = detail::get_le<double>(b + 48);
  h.frame_count = detail::get_le<std::uint64_t>(b + 56);
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedFile, std::string("header: ") + e.what());
  }
  return h;
}

/// Streams frames to disk. The frame count in the header is patched on close.
class FrameWriter {
 public:
  FrameWriter(const std::filesystem::path& path, const AcquisitionConfig& config)
      : path_(path), header_{config, 0}, file_(detail::open_file(path, "wb")) {
    config.validate();
    write_raw(encode_header(header_).data(), kHeaderSize);
  }
  ~FrameWriter() {
    try {
      close();
    } catch (...) {
    }
  }
  FrameWriter(const FrameWriter&) = delete;
  FrameWriter& operator=(const FrameWriter&) = delete;

  void write(const FrameView& frame) {
    const auto& c = header_.config;
    if (frame.width != c.roi_width || frame.height != c.roi_height || frame.samples.size() != c.pixel_count()) {
      throw Error(ErrorCode::DimensionMismatch, "frame does not match the file dimensions");
    }
    const auto max = c.max_sample();
    if (std::any_of(frame.samples.begin(), frame.samples.end(), [&](std::uint16_t s) { return s > max; })) {
      throw Error(ErrorCode::MalformedFile, "sample exceeds bit depth " + std::to_string(c.bit_depth));
    }
    if constexpr (std::endian::native == std::endian::little) {
      write_raw(frame.samples.data(), frame.samples.size() * 2);
    } else {
      buffer_.assign(frame.samples.begin(), frame.samples.end());
      detail::swap_samples_if_big_endian(buffer_.data(), buffer_.size());
      write_raw(buffer_.data(), buffer_.size() * 2);
    }
    ++header_.frame_count;
  }

  std::uint64_t frame_count() const noexcept { return header_.frame_count; }

  void close() {
    if (!file_) return;
    const auto h = encode_header(header_);
    if (std::fseek(file_.get(), 0, SEEK_SET) != 0) throw Error(ErrorCode::MalformedFile, "seek failed on " + path_.string());
    write_raw(h.data(), kHeaderSize);
    if (std::fclose(file_.release()) != 0) throw Error(ErrorCode::MalformedFile, "close failed on " + path_.string());
  }

 private:
  void write_raw(const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, file_.get()) != n) throw Error(ErrorCode::MalformedFile, "write failed on " + path_.string());
  }

  std::filesystem::path path_;
  FrameFileHeader header_;
  detail::FilePtr file_;
  std::vector<std::uint16_t> buffer_;
};

/// Sequential frame reader with a reusable buffer. The file size is checked
/// against the header before any frame is returned.
class FrameReader {
 public:
  explicit FrameReader(const std::filesystem::path& path) : path_(path), file_(detail::open_file(path, "rb")) {
    std::array<unsigned char, kHeaderSize> b{};
    const std::size_t got = std::fread(b.data(), 1, kHeaderSize, file_.get());
    header_ = decode_header(b.data(), got);
    const auto size = std::filesystem::file_size(path);
    if (size != header_.expected_size()) {
      const auto payload = size - std::min<std::uintmax_t>(size, kHeaderSize);
      const auto whole = payload / header_.frame_bytes();
      throw Error(ErrorCode::MalformedFile,
                  "file is " + std::to_string(size) + " bytes, header implies " +
                      std::to_string(header_.expected_size()) + "; " +
                      (size < header_.expected_size()
                           ? "payload truncated at byte offset " + std::to_string(size) + " (frame " +
                                 std::to_string(whole) + " incomplete)"
                           : "trailing bytes from byte offset " + std::to_string(header_.expected_size())));
    }
  }

  const FrameFileHeader& header() const noexcept { return header_; }
  const AcquisitionConfig& config() const noexcept { return header_.config; }
  std::uint64_t frame_count() const noexcept { return header_.frame_count; }
  std::uint64_t position() const noexcept { return index_; }

  /// Reads the next frame into `frame`; false at end of stream.
  bool next(Frame& frame) {
    if (index_ >= header_.frame_count) return false;
    const auto& c = header_.config;
    frame.width = c.roi_width;
    frame.height = c.roi_height;
    frame.samples.resize(c.pixel_count());
    frame.timestamp = static_cast<double>(index_) / c.fps;
    const std::size_t n = frame.samples.size();
    if (std::fread(frame.samples.data(), 2, n, file_.get()) != n) {
      throw Error(ErrorCode::MalformedFile, "read failed at byte offset " +
                                                std::to_string(kHeaderSize + index_ * header_.frame_bytes()));
    }
    detail::swap_samples_if_big_endian(frame.samples.data(), n);
    const auto max = c.max_sample();
    std::uint16_t hi = 0;
    for (const auto s : frame.samples) hi = std::max(hi, s);
    if (hi > max) {
      throw Error(ErrorCode::MalformedFile, "frame " + std::to_string(index_) + " has sample " +
                                                std::to_string(hi) + " above bit depth " +
                                                std::to_string(c.bit_depth));
    }
    ++index_;
    return true;
  }

 private:
  std::filesystem::path path_;
  detail::FilePtr file_;
  FrameFileHeader header_;
  std::uint64_t index_ = 0;
};

inline void write_frame_stream(const std::filesystem::path& path, const FrameStream& stream) {
  FrameWriter w(path, stream.config);
  for (const auto& f : stream.frames) w.write(f.view());
  w.close();
}

inline FrameStream read_frame_stream(const std::filesystem::path& path) {
  FrameReader r(path);
  FrameStream s{r.config(), {}};
  s.frames.reserve(r.frame_count());
  Frame f;
  while (r.next(f)) s.frames.push_back(f);
  return s;
}

}  // namespace scos::io
