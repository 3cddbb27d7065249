#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfs/image.hpp"
#include "dfs/nn/module.hpp"
#include "dfs/nn/ops.hpp"

// The four networks of the segmentation-guided dehazing setup: generator,
// conditional patch discriminator, perceptual feature extractor and the
// segmentation network.
namespace dfs::models {

using nn::Shape;
using nn::Tensor;
using nn::Var;

enum class Profile { tiny, paper };

std::string to_string(Profile p);
Profile parse_profile(const std::string& s);

enum class NormKind { instance, batch };

// Parses "key=value" lines as written by the spec echo() methods.
std::map<std::string, std::string> parse_echo(const std::string& echo);

struct GeneratorSpec {
  int input_channels = 3;
  int base_width = 8;
  int n_down = 1;
  int n_res = 2;
  NormKind norm = NormKind::instance;
  // The only supported head: tanh rescaled to [0,1].
  std::string output_activation = "tanh_rescaled";

  static GeneratorSpec for_profile(Profile p);
  void validate() const;
  std::string echo() const;
  static GeneratorSpec from_echo(const std::string& echo);
  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct DiscriminatorSpec {
  int input_channels = 3;  // per image; the pair is concatenated
  int patch_levels = 3;
  int base_width = 8;

  static DiscriminatorSpec for_profile(Profile p);
  void validate() const;
  // Receptive field of one output score, in input pixels.
  int receptive_field() const;
  std::string echo() const;
  static DiscriminatorSpec from_echo(const std::string& echo);
  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

struct SegNetSpec {
  int input_channels = 3;
  int n_classes = 5;
  int base_width = 8;
  int n_down = 2;

  static SegNetSpec for_profile(Profile p);
  // Held-out evaluator: same topology family, different width.
  static SegNetSpec evaluator_for_profile(Profile p);
  void validate() const;
  std::string echo() const;
  static SegNetSpec from_echo(const std::string& echo);
  friend bool operator==(const SegNetSpec&, const SegNetSpec&) = default;
};

// weights_source is either "random:<seed>" (fixed random convolutional stack)
// or "vgg16:<path>" (VGG-16 feature snapshot in checkpoint format).
struct PerceptualExtractorSpec {
  std::vector<std::string> layer_taps{"pool1", "pool2"};
  std::string weights_source = "random:1234";

  static PerceptualExtractorSpec for_profile(Profile p, const std::string& vgg_path = "");
  void validate() const;
  std::string echo() const;
  friend bool operator==(const PerceptualExtractorSpec&, const PerceptualExtractorSpec&) = default;
};

// Images <-> NCHW tensors.
template <typename T>
Tensor<T> to_tensor(const std::vector<Image>& batch);
template <typename T>
Image to_image(const Tensor<T>& t, int index);

template <typename T>
class Generator : public nn::Module<T> {
 public:
  Generator(const GeneratorSpec& spec, std::uint64_t seed);

  std::string kind() const override { return "generator"; }
  std::string spec_echo() const override { return spec_.echo(); }
  const GeneratorSpec& spec() const { return spec_; }

  // hazy: {N, C, H, W} in [0,1]; H and W must be multiples of 2^n_down.
  Var<T> forward(const Var<T>& hazy) const;

  // Zeroes the output convolution so the head emits exactly 0.5.
  void zero_output_layer();

 private:
  Var<T> norm(const Var<T>& x, const std::string& prefix) const;

  GeneratorSpec spec_;
  std::map<std::string, Var<T>> p_;
};

template <typename T>
class Discriminator : public nn::Module<T> {
 public:
  Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

  std::string kind() const override { return "discriminator"; }
  std::string spec_echo() const override { return spec_.echo(); }
  const DiscriminatorSpec& spec() const { return spec_; }

  // Raw patch logits {N, 1, H/2^L, W/2^L} for (condition, candidate).
  Var<T> forward(const Var<T>& condition, const Var<T>& candidate) const;

 private:
  DiscriminatorSpec spec_;
  std::map<std::string, Var<T>> p_;
};

template <typename T>
class SegNet : public nn::Module<T> {
 public:
  SegNet(const SegNetSpec& spec, std::uint64_t seed);

  std::string kind() const override { return "segnet"; }
  std::string spec_echo() const override { return spec_.echo(); }
  const SegNetSpec& spec() const { return spec_; }

  // Class logits {N, n_classes, H, W}.
  Var<T> forward(const Var<T>& img) const;
  // Argmax labels of one batch, one map per sample.
  std::vector<SegLabelMap> predict(const Tensor<T>& img) const;

 private:
  Var<T> block(const Var<T>& x, const std::string& name, int stride) const;

  SegNetSpec spec_;
  std::map<std::string, Var<T>> p_;
};

template <typename T>
class PerceptualExtractor : public nn::Module<T> {
 public:
  // Throws LoadError if a vgg16 snapshot is missing or malformed.
  explicit PerceptualExtractor(const PerceptualExtractorSpec& spec);

  std::string kind() const override { return "perceptual"; }
  std::string spec_echo() const override { return spec_.echo(); }
  const PerceptualExtractorSpec& spec() const { return spec_; }

  // One feature map per tap, in tap order. Parameters never require grad.
  std::vector<Var<T>> features(const Var<T>& img) const;

  // Architecture table: stage name -> conv output widths.
  struct Stage {
    std::string pool_name;
    std::vector<int> widths;
  };
  static std::vector<Stage> architecture(bool vgg);

 private:
  PerceptualExtractorSpec spec_;
  bool vgg_ = false;
  int depth_ = 0;  // number of stages needed to reach the deepest tap
  std::map<std::string, Var<T>> p_;
};

}  // namespace dfs::models
