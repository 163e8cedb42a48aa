#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dkf/error.hpp"

namespace dkf {

enum class Subsampling : std::uint8_t { k420 = 0, k444 = 1 };

// Row-major 2-D sample array.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    require(width >= 0 && height >= 0, "plane dimensions must be non-negative");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& at(int x, int y) const { return data_[index(x, y)]; }

  // Border-replicating read.
  const T& clamped(int x, int y) const {
    x = x < 0 ? 0 : (x >= width_ ? width_ - 1 : x);
    y = y < 0 ? 0 : (y >= height_ ? height_ - 1 : y);
    return data_[index(x, y)];
  }

  std::span<T> row(int y) { return {data_.data() + index(0, y), static_cast<std::size_t>(width_)}; }
  std::span<const T> row(int y) const {
    return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
  }

  std::vector<T>& samples() { return data_; }
  const std::vector<T>& samples() const { return data_; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

inline int chroma_width(int width, Subsampling ss) {
  return ss == Subsampling::k420 ? (width + 1) / 2 : width;
}
inline int chroma_height(int height, Subsampling ss) {
  return ss == Subsampling::k420 ? (height + 1) / 2 : height;
}
inline int chroma_shift(Subsampling ss) { return ss == Subsampling::k420 ? 1 : 0; }

// 8-bit Y/Cb/Cr image.  Chroma planes are ceil(w/2) x ceil(h/2) under 4:2:0.
struct PlanarImage {
  int width = 0;
  int height = 0;
  Subsampling subsampling = Subsampling::k420;
  std::array<Plane<std::uint8_t>, 3> planes;

  static constexpr int kBitDepth = 8;

  PlanarImage() = default;
  PlanarImage(int w, int h, Subsampling ss, std::uint8_t fill = 128)
      : width(w), height(h), subsampling(ss),
        planes{Plane<std::uint8_t>(w, h, fill),
               Plane<std::uint8_t>(chroma_width(w, ss), chroma_height(h, ss), fill),
               Plane<std::uint8_t>(chroma_width(w, ss), chroma_height(h, ss), fill)} {}

  Plane<std::uint8_t>& luma() { return planes[0]; }
  const Plane<std::uint8_t>& luma() const { return planes[0]; }

  bool valid() const {
    if (width <= 0 || height <= 0) return false;
    if (planes[0].width() != width || planes[0].height() != height) return false;
    for (int c = 1; c < 3; ++c) {
      if (planes[c].width() != chroma_width(width, subsampling) ||
          planes[c].height() != chroma_height(height, subsampling))
        return false;
    }
    return true;
  }

  friend bool operator==(const PlanarImage&, const PlanarImage&) = default;
};

}  // namespace dkf
