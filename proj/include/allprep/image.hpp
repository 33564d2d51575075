#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "allprep/error.hpp"

namespace allprep {

struct Size {
  int width = 0;
  int height = 0;

  std::size_t area() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  friend bool operator==(const Size&, const Size&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

namespace detail {

inline void require_dims(int width, int height, const char* what) {
  if (width < 1 || height < 1) {
    throw Error(Errc::InvalidArgument,
                std::string(what) + " dimensions must be >= 1, got " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
}

}  // namespace detail

/// 8-bit interleaved RGB raster, row-major. Channel order is always R, G, B.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  RasterImage(int width, int height, Rgb fill = {0, 0, 0})
      : width_(width), height_(height) {
    detail::require_dims(width, height, "RasterImage");
    data_.resize(size().area() * kChannels);
    for (std::size_t i = 0; i < size().area(); ++i) {
      data_[3 * i + 0] = fill[0];
      data_[3 * i + 1] = fill[1];
      data_[3 * i + 2] = fill[2];
    }
  }
  RasterImage(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    detail::require_dims(width, height, "RasterImage");
    if (data_.size() != size().area() * kChannels) {
      throw Error(Errc::ShapeMismatch, "RasterImage buffer length " +
                                           std::to_string(data_.size()) +
                                           " != width*height*3");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Size size() const noexcept { return {width_, height_}; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  Rgb pixel(int x, int y) const noexcept {
    const std::size_t i = offset(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set_pixel(int x, int y, Rgb v) noexcept {
    const std::size_t i = offset(x, y);
    data_[i] = v[0];
    data_[i + 1] = v[1];
    data_[i + 2] = v[2];
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Single-channel 8-bit raster (an L, a* or b* plane, a clustered plane,
/// or a 0/255 mask ready for encoding).
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height) {
    detail::require_dims(width, height, "Plane");
    data_.assign(size().area(), fill);
  }
  Plane(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    detail::require_dims(width, height, "Plane");
    if (data_.size() != size().area()) {
      throw Error(Errc::ShapeMismatch, "Plane buffer length " +
                                           std::to_string(data_.size()) +
                                           " != width*height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Size size() const noexcept { return {width_, height_}; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  std::uint8_t at(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::uint8_t& at(int x, int y) noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Segmentation state: one {0,1} bit per pixel, stored one byte per pixel.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : width_(width), height_(height) {
    detail::require_dims(width, height, "BinaryMask");
    bits_.assign(size().area(), fill ? 1 : 0);
  }
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
      : width_(width), height_(height), bits_(std::move(bits)) {
    detail::require_dims(width, height, "BinaryMask");
    if (bits_.size() != size().area()) {
      throw Error(Errc::ShapeMismatch, "BinaryMask buffer length mismatch");
    }
    for (auto& b : bits_) {
      if (b > 1) {
        throw Error(Errc::InvalidArgument, "BinaryMask bits must be 0 or 1");
      }
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Size size() const noexcept { return {width_, height_}; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool get(int x, int y) const noexcept {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  // Out-of-bounds reads are background; every morphology op relies on this.
  bool get_or_zero(int x, int y) const noexcept {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
    return get(x, y);
  }
  void set(int x, int y, bool v) noexcept {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  /// True when every set bit of *this is also set in other.
  bool subset_of(const BinaryMask& other) const noexcept {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
      if (bits_[i] && !other.bits_[i]) return false;
    }
    return true;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace allprep
