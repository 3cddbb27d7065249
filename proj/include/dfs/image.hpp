#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dfs {

// Floating point raster, interleaved H x W x C, nominally in [0,1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Image& other) const;
  std::string shape_string() const;

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Single-channel integer raster used for class labels and instance ids.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  T& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  template <typename U>
  bool same_shape(const Raster<U>& o) const {
    return height_ == o.height() && width_ == o.width();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using SegLabelMap = Raster<std::uint8_t>;
using InstanceMap = Raster<std::uint16_t>;

inline constexpr std::uint8_t kIgnoreLabel = 255;

// ITU-R BT.601 luma; single-channel images pass through unchanged.
Image to_grayscale(const Image& img);

// Bilinear resampling with half-pixel centers (OpenCV INTER_LINEAR semantics).
Image resize_bilinear(const Image& img, int height, int width);

// Nearest-neighbour resampling for label-like rasters.
template <typename T>
Raster<T> resize_nearest(const Raster<T>& r, int height, int width) {
  Raster<T> out(height, width);
  for (int y = 0; y < height; ++y) {
    int sy = std::min(r.height() - 1, static_cast<int>((y + 0.5) * r.height() / height));
    for (int x = 0; x < width; ++x) {
      int sx = std::min(r.width() - 1, static_cast<int>((x + 0.5) * r.width() / width));
      out.at(y, x) = r.at(sy, sx);
    }
  }
  return out;
}

// Copies the rectangle [x0, x0+w) x [y0, y0+h).
Image crop(const Image& img, int x0, int y0, int width, int height);

template <typename T>
Raster<T> crop(const Raster<T>& r, int x0, int y0, int width, int height) {
  Raster<T> out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(y, x) = r.at(y0 + y, x0 + x);
  return out;
}

}  // namespace dfs
