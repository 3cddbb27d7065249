#include "dfs/haze.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dfs/error.hpp"

namespace dfs::haze {
namespace {

void check_pair(const Image& img, const TransmissionMap& t) {
  if (img.height() != t.height() || img.width() != t.width())
    throw ShapeError("image " + img.shape_string() + " does not match transmission map " +
                     std::to_string(t.height()) + "x" + std::to_string(t.width()));
  if (img.channels() != 1 && img.channels() != 3)
    throw ShapeError("haze model supports 1 or 3 channels, got " +
                     std::to_string(img.channels()));
}

}  // namespace

void HazeParams::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw ValidationError("haze beta must be finite and > 0, got " + std::to_string(beta));
  for (double a : airlight)
    if (!(a >= 0.0 && a <= 1.0))
      throw ValidationError("airlight channels must lie in [0,1], got " + std::to_string(a));
}

void validate_depth(const DepthMap& depth) {
  std::size_t bad = 0;
  for (double d : depth.meters.values())
    if (!std::isfinite(d) || d < 0.0) ++bad;
  if (bad > 0)
    throw ValidationError("depth map has " + std::to_string(bad) +
                          " non-finite or negative pixel(s)");
}

TransmissionMap depth_to_transmission(const DepthMap& depth, const HazeParams& params) {
  params.validate();
  validate_depth(depth);
  TransmissionMap t{Raster<double>(depth.height(), depth.width())};
  auto src = depth.meters.values();
  auto dst = t.values.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::exp(-params.beta * src[i]);
  return t;
}

Image synthesize_haze(const Image& clean, const TransmissionMap& t,
                      const HazeParams& params, SynthesisStats* stats) {
  params.validate();
  check_pair(clean, t);
  Image out(clean.height(), clean.width(), clean.channels());
  std::size_t clipped = 0;
  for (int y = 0; y < clean.height(); ++y) {
    for (int x = 0; x < clean.width(); ++x) {
      const double tx = t.values.at(y, x);
      for (int c = 0; c < clean.channels(); ++c) {
        const double j = clean.at(y, x, c);
        if (!(j >= 0.0 && j <= 1.0))
          throw ValidationError("clean image value outside [0,1] at (" + std::to_string(y) +
                                "," + std::to_string(x) + ")");
        double v = j * tx + params.airlight[c] * (1.0 - tx);
        if (v < 0.0 || v > 1.0) {
          v = std::clamp(v, 0.0, 1.0);
          ++clipped;
        }
        out.at(y, x, c) = v;
      }
    }
  }
  if (stats) stats->clipped += clipped;
  return out;
}

Image dehaze_analytic(const Image& hazy, const TransmissionMap& t,
                      const HazeParams& params, double t_floor) {
  params.validate();
  check_pair(hazy, t);
  std::size_t below = 0;
  for (double v : t.values.values())
    if (!(v >= t_floor)) ++below;
  if (below > 0)
    throw NumericError("ill-conditioned inversion: " + std::to_string(below) +
                       " transmission value(s) below floor " + std::to_string(t_floor));
  Image out(hazy.height(), hazy.width(), hazy.channels());
  for (int y = 0; y < hazy.height(); ++y)
    for (int x = 0; x < hazy.width(); ++x) {
      const double tx = t.values.at(y, x);
      for (int c = 0; c < hazy.channels(); ++c) {
        const double a = params.airlight[c];
        out.at(y, x, c) = std::clamp((hazy.at(y, x, c) - a * (1.0 - tx)) / tx, 0.0, 1.0);
      }
    }
  return out;
}

}  // namespace dfs::haze
