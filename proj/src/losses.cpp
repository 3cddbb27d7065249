#include "dfs/losses.hpp"

#include <cmath>
#include <iomanip>

#include "dfs/error.hpp"

namespace dfs::losses {
namespace {

template <typename T>
void require_finite(const Var<T>& v, const char* what) {
  for (T x : v.value().values())
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string(what) + ": non-finite score");
}

}  // namespace

void LossWeights::validate() const {
  for (double l : {lambda1, lambda2, lambda3})
    if (!std::isfinite(l) || l < 0.0)
      throw ValidationError("loss weights must be finite and non-negative, got " + std::to_string(l));
}

template <typename T>
Var<T> gan_generator_loss(const Var<T>& scores_on_fake, GanMode mode) {
  require_finite(scores_on_fake, "gan_generator_loss");
  if (mode == GanMode::lsgan) return nn::mean_square_to(scores_on_fake, T(1));
  return nn::bce_with_logits(scores_on_fake, T(1));
}

template <typename T>
Var<T> gan_discriminator_loss(const Var<T>& scores_real, const Var<T>& scores_fake, GanMode mode) {
  require_finite(scores_real, "gan_discriminator_loss");
  require_finite(scores_fake, "gan_discriminator_loss");
  Var<T> real = mode == GanMode::lsgan ? nn::mean_square_to(scores_real, T(1))
                                       : nn::bce_with_logits(scores_real, T(1));
  Var<T> fake = mode == GanMode::lsgan ? nn::mean_square_to(scores_fake, T(0))
                                       : nn::bce_with_logits(scores_fake, T(0));
  return nn::weighted_sum<T>({real, fake}, {T(0.5), T(0.5)});
}

template <typename T>
Var<T> pixel_loss(const Var<T>& fake, const Var<T>& real, PixelMode mode) {
  return mode == PixelMode::l1 ? nn::mean_abs_diff(fake, real) : nn::mean_square_diff(fake, real);
}

template <typename T>
Var<T> perceptual_loss(const Var<T>& fake, const Var<T>& real,
                       const models::PerceptualExtractor<T>& extractor) {
  if (!(fake.shape() == real.shape()))
    throw ShapeError("perceptual_loss: shape mismatch " + fake.shape().str() + " vs " +
                     real.shape().str());
  auto ff = extractor.features(fake);
  auto fr = extractor.features(real.detach());
  std::vector<Var<T>> terms;
  for (std::size_t i = 0; i < ff.size(); ++i) terms.push_back(nn::mean_square_diff(ff[i], fr[i]));
  std::vector<T> w(terms.size(), T(1) / static_cast<T>(terms.size()));
  return nn::weighted_sum(terms, w);
}

template <typename T>
Var<T> seg_loss(const Var<T>& seg_scores, std::span<const std::uint8_t> labels) {
  return nn::masked_onehot_mse(nn::softmax_channels(seg_scores), labels);
}

std::vector<std::uint8_t> flatten_labels(const std::vector<SegLabelMap>& maps) {
  std::vector<std::uint8_t> out;
  for (const auto& m : maps) out.insert(out.end(), m.values().begin(), m.values().end());
  return out;
}

LossBreakdown composite_generator_loss(const LossBreakdown& parts, const LossWeights& w) {
  w.validate();
  for (double v : {parts.gan, parts.pixel, parts.percep, parts.seg})
    if (!std::isfinite(v)) throw NumericError("composite_generator_loss: non-finite part");
  LossBreakdown out = parts;
  out.total = parts.gan + w.lambda1 * parts.pixel + w.lambda2 * parts.percep;
  if (w.lambda3 != 0.0) out.total += w.lambda3 * parts.seg;
  return out;
}

template <typename T>
Var<T> composite_generator_loss(const Var<T>& gan, const Var<T>& pixel, const Var<T>& percep,
                                const Var<T>& seg, const LossWeights& w) {
  w.validate();
  std::vector<Var<T>> terms{gan, pixel, percep};
  std::vector<T> weights{T(1), static_cast<T>(w.lambda1), static_cast<T>(w.lambda2)};
  if (w.lambda3 != 0.0) {
    if (!seg.defined()) throw ConfigError("lambda3 > 0 but no segmentation term supplied");
    terms.push_back(seg);
    weights.push_back(static_cast<T>(w.lambda3));
  }
  return nn::weighted_sum(terms, weights);
}

void write_loss_log_header(std::ostream& out) { out << "step,gan,pixel,percep,seg,total\n"; }

void append_loss_log_row(std::ostream& out, long step, const LossBreakdown& b) {
  out << step << std::setprecision(9) << ',' << b.gan << ',' << b.pixel << ',' << b.percep << ','
      << b.seg << ',' << b.total << '\n';
}

#define DFS_INSTANTIATE_LOSSES(T)                                                                \
  template Var<T> gan_generator_loss<T>(const Var<T>&, GanMode);                                 \
  template Var<T> gan_discriminator_loss<T>(const Var<T>&, const Var<T>&, GanMode);              \
  template Var<T> pixel_loss<T>(const Var<T>&, const Var<T>&, PixelMode);                        \
  template Var<T> perceptual_loss<T>(const Var<T>&, const Var<T>&,                               \
                                     const models::PerceptualExtractor<T>&);                     \
  template Var<T> seg_loss<T>(const Var<T>&, std::span<const std::uint8_t>);                     \
  template Var<T> composite_generator_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&,       \
                                              const Var<T>&, const LossWeights&);

DFS_INSTANTIATE_LOSSES(float)
DFS_INSTANTIATE_LOSSES(double)

}  // namespace dfs::losses
