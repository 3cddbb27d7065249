#pragma once

#include <array>
#include <cstddef>

#include "dfs/image.hpp"

// Single-scattering haze model: I = J*t + A*(1 - t), t = exp(-beta * d).
namespace dfs::haze {

struct HazeParams {
  double beta = 0.7;                         // attenuation, 1/m
  std::array<double, 3> airlight{0.8, 0.8, 0.8};

  static HazeParams gray(double beta, double airlight) {
    return HazeParams{beta, {airlight, airlight, airlight}};
  }
  // Throws ValidationError unless beta > 0 and every airlight channel is in [0,1].
  void validate() const;
};

// Per-pixel scene distance in meters.
struct DepthMap {
  Raster<double> meters;
  int height() const { return meters.height(); }
  int width() const { return meters.width(); }
};

// Per-pixel transmission in (0, 1].
struct TransmissionMap {
  Raster<double> values;
  int height() const { return values.height(); }
  int width() const { return values.width(); }
};

// Throws ValidationError reporting how many pixels are non-finite or negative.
void validate_depth(const DepthMap& depth);

TransmissionMap depth_to_transmission(const DepthMap& depth, const HazeParams& params);

struct SynthesisStats {
  std::size_t clipped = 0;  // samples pulled back into [0,1]
};

Image synthesize_haze(const Image& clean, const TransmissionMap& t,
                      const HazeParams& params, SynthesisStats* stats = nullptr);

inline constexpr double kDefaultTransmissionFloor = 1e-3;

// Inverts synthesize_haze. Throws NumericError when any t is below `t_floor`.
Image dehaze_analytic(const Image& hazy, const TransmissionMap& t,
                      const HazeParams& params,
                      double t_floor = kDefaultTransmissionFloor);

}  // namespace dfs::haze
