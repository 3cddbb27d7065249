#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "dfs/models.hpp"

// Generator objective: L = L_GAN + l1 * L_pixel + l2 * L_percep + l3 * L_seg.
// With l3 = 0 the segmentation term is dropped and the plain dehazing
// objective is recovered.
namespace dfs::losses {

using nn::Var;

struct LossWeights {
  double lambda1 = 10.0;  // pixel
  double lambda2 = 10.0;  // perceptual
  double lambda3 = 0.0;   // segmentation

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double gan = 0.0;
  double pixel = 0.0;
  double percep = 0.0;
  double seg = 0.0;
  double total = 0.0;
  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

enum class GanMode { vanilla, lsgan };
enum class PixelMode { l1, l2 };

// BCE of fake patch scores against the "real" label (or LSGAN equivalent).
template <typename T>
Var<T> gan_generator_loss(const Var<T>& scores_on_fake, GanMode mode = GanMode::vanilla);

// 0.5 * (BCE(real -> 1) + BCE(fake -> 0)).
template <typename T>
Var<T> gan_discriminator_loss(const Var<T>& scores_real, const Var<T>& scores_fake,
                              GanMode mode = GanMode::vanilla);

template <typename T>
Var<T> pixel_loss(const Var<T>& fake, const Var<T>& real, PixelMode mode = PixelMode::l1);

// Mean over taps of the mean squared feature difference. The reference
// branch is evaluated without a graph.
template <typename T>
Var<T> perceptual_loss(const Var<T>& fake, const Var<T>& real,
                       const models::PerceptualExtractor<T>& extractor);

// MSE between softmax(scores) and one-hot(labels) over non-ignored pixels.
template <typename T>
Var<T> seg_loss(const Var<T>& seg_scores, std::span<const std::uint8_t> labels);

// Flattens per-sample label maps in batch order.
std::vector<std::uint8_t> flatten_labels(const std::vector<SegLabelMap>& maps);

// Scalar-level composition; fills `total` from the four parts.
LossBreakdown composite_generator_loss(const LossBreakdown& parts, const LossWeights& w);

// Graph-level composition. `seg` may be undefined, in which case lambda3
// must be 0.
template <typename T>
Var<T> composite_generator_loss(const Var<T>& gan, const Var<T>& pixel, const Var<T>& percep,
                                const Var<T>& seg, const LossWeights& w);

void write_loss_log_header(std::ostream& out);
void append_loss_log_row(std::ostream& out, long step, const LossBreakdown& b);

}  // namespace dfs::losses
