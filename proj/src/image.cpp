#include "dfs/image.hpp"

#include <algorithm>
#include <cmath>

#include "dfs/error.hpp"

namespace dfs {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0)
    throw ShapeError("negative image dimension");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool Image::same_shape(const Image& other) const {
  return height_ == other.height_ && width_ == other.width_ &&
         channels_ == other.channels_;
}

std::string Image::shape_string() const {
  return std::to_string(height_) + "x" + std::to_string(width_) + "x" +
         std::to_string(channels_);
}

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3)
    throw ShapeError("grayscale conversion needs 1 or 3 channels, got " +
                     std::to_string(img.channels()));
  Image out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(y, x, 0) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                        0.114 * img.at(y, x, 2);
  return out;
}

Image resize_bilinear(const Image& img, int height, int width) {
  if (img.empty() || height <= 0 || width <= 0)
    throw ShapeError("cannot resize " + img.shape_string() + " to " +
                     std::to_string(height) + "x" + std::to_string(width));
  if (height == img.height() && width == img.width()) return img;
  Image out(height, width, img.channels());
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (int y = 0; y < height; ++y) {
    double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    int y0 = std::min(static_cast<int>(fy), img.height() - 1);
    int y1 = std::min(y0 + 1, img.height() - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      int x0 = std::min(static_cast<int>(fx), img.width() - 1);
      int x1 = std::min(x0 + 1, img.width() - 1);
      double wx = fx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image crop(const Image& img, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > img.width() || y0 + height > img.height())
    throw ShapeError("crop window outside image " + img.shape_string());
  Image out(height, width, img.channels());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

}  // namespace dfs
