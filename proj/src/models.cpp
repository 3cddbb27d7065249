#include "dfs/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dfs/error.hpp"
#include "dfs/nn/checkpoint.hpp"

namespace dfs::models {
namespace {

int get_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw LoadError("spec echo lacks '" + key + "'");
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw LoadError("spec echo has non-integer '" + key + "': " + it->second);
  }
}

void expect_kind(const std::map<std::string, std::string>& kv, const std::string& kind) {
  auto it = kv.find("kind");
  if (it == kv.end() || it->second != kind) throw LoadError("spec echo is not a " + kind + " spec");
}

std::string norm_name(NormKind k) { return k == NormKind::instance ? "instance" : "batch"; }

NormKind parse_norm(const std::string& s) {
  if (s == "instance") return NormKind::instance;
  if (s == "batch") return NormKind::batch;
  throw ConfigError("unknown norm kind '" + s + "'");
}

// ImageNet statistics expected by VGG snapshots.
constexpr double kVggMean[3] = {0.485, 0.456, 0.406};
constexpr double kVggStd[3] = {0.229, 0.224, 0.225};

}  // namespace

std::string to_string(Profile p) { return p == Profile::tiny ? "tiny" : "paper"; }

Profile parse_profile(const std::string& s) {
  if (s == "tiny") return Profile::tiny;
  if (s == "paper") return Profile::paper;
  throw ConfigError("unknown profile '" + s + "' (expected tiny or paper)");
}

std::map<std::string, std::string> parse_echo(const std::string& echo) {
  std::map<std::string, std::string> kv;
  std::istringstream in(echo);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw LoadError("malformed spec line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

// ---- specs ----

GeneratorSpec GeneratorSpec::for_profile(Profile p) {
  if (p == Profile::tiny) return GeneratorSpec{3, 16, 1, 4, NormKind::instance};
  return GeneratorSpec{3, 64, 2, 9, NormKind::instance};
}

void GeneratorSpec::validate() const {
  if (input_channels < 1) throw ConfigError("generator needs at least one input channel");
  if (n_down < 1) throw ConfigError("generator n_down must be >= 1");
  if (n_res < 1) throw ConfigError("generator n_res must be >= 1");
  if (base_width < 4) throw ConfigError("generator base_width must be >= 4");
  if (output_activation != "tanh_rescaled")
    throw ConfigError("unsupported output activation '" + output_activation + "'");
}

std::string GeneratorSpec::echo() const {
  std::ostringstream o;
  o << "kind=generator\ninput_channels=" << input_channels << "\nbase_width=" << base_width
    << "\nn_down=" << n_down << "\nn_res=" << n_res << "\nnorm=" << norm_name(norm)
    << "\noutput_activation=" << output_activation << "\n";
  return o.str();
}

GeneratorSpec GeneratorSpec::from_echo(const std::string& echo) {
  auto kv = parse_echo(echo);
  expect_kind(kv, "generator");
  GeneratorSpec s;
  s.input_channels = get_int(kv, "input_channels");
  s.base_width = get_int(kv, "base_width");
  s.n_down = get_int(kv, "n_down");
  s.n_res = get_int(kv, "n_res");
  s.norm = parse_norm(kv.at("norm"));
  s.output_activation = kv.at("output_activation");
  s.validate();
  return s;
}

DiscriminatorSpec DiscriminatorSpec::for_profile(Profile p) {
  if (p == Profile::tiny) return DiscriminatorSpec{3, 3, 8};
  return DiscriminatorSpec{3, 4, 64};
}

void DiscriminatorSpec::validate() const {
  if (input_channels < 1) throw ConfigError("discriminator needs at least one input channel");
  if (patch_levels < 2) throw ConfigError("discriminator patch_levels must be >= 2");
  if (base_width < 1) throw ConfigError("discriminator base_width must be >= 1");
}

int DiscriminatorSpec::receptive_field() const {
  int r = 1;  // final 1x1 scoring convolution
  for (int i = 0; i < patch_levels; ++i) r = (r - 1) * 2 + 4;
  return r;
}

std::string DiscriminatorSpec::echo() const {
  std::ostringstream o;
  o << "kind=discriminator\ninput_channels=" << input_channels << "\npatch_levels=" << patch_levels
    << "\nbase_width=" << base_width << "\n";
  return o.str();
}

DiscriminatorSpec DiscriminatorSpec::from_echo(const std::string& echo) {
  auto kv = parse_echo(echo);
  expect_kind(kv, "discriminator");
  DiscriminatorSpec s{get_int(kv, "input_channels"), get_int(kv, "patch_levels"),
                      get_int(kv, "base_width")};
  s.validate();
  return s;
}

SegNetSpec SegNetSpec::for_profile(Profile p) {
  if (p == Profile::tiny) return SegNetSpec{3, 5, 8, 2};
  return SegNetSpec{3, 19, 32, 4};
}

SegNetSpec SegNetSpec::evaluator_for_profile(Profile p) {
  SegNetSpec s = for_profile(p);
  s.base_width = p == Profile::tiny ? 12 : 48;
  return s;
}

void SegNetSpec::validate() const {
  if (input_channels < 1) throw ConfigError("segnet needs at least one input channel");
  if (n_classes < 2 || n_classes > 254) throw ConfigError("segnet n_classes must be in [2,254]");
  if (base_width < 1) throw ConfigError("segnet base_width must be >= 1");
  if (n_down < 1) throw ConfigError("segnet n_down must be >= 1");
}

std::string SegNetSpec::echo() const {
  std::ostringstream o;
  o << "kind=segnet\ninput_channels=" << input_channels << "\nn_classes=" << n_classes
    << "\nbase_width=" << base_width << "\nn_down=" << n_down << "\n";
  return o.str();
}

SegNetSpec SegNetSpec::from_echo(const std::string& echo) {
  auto kv = parse_echo(echo);
  expect_kind(kv, "segnet");
  SegNetSpec s{get_int(kv, "input_channels"), get_int(kv, "n_classes"), get_int(kv, "base_width"),
               get_int(kv, "n_down")};
  s.validate();
  return s;
}

PerceptualExtractorSpec PerceptualExtractorSpec::for_profile(Profile p, const std::string& vgg_path) {
  if (p == Profile::tiny) return PerceptualExtractorSpec{{"pool1", "pool2"}, "random:1234"};
  return PerceptualExtractorSpec{{"pool2", "pool4"}, "vgg16:" + vgg_path};
}

void PerceptualExtractorSpec::validate() const {
  if (layer_taps.empty()) throw ConfigError("perceptual extractor needs at least one tap");
  if (weights_source.rfind("random:", 0) != 0 && weights_source.rfind("vgg16:", 0) != 0)
    throw ConfigError("weights_source must be random:<seed> or vgg16:<path>, got '" +
                      weights_source + "'");
}

std::string PerceptualExtractorSpec::echo() const {
  std::ostringstream o;
  o << "kind=perceptual\ntaps=";
  for (std::size_t i = 0; i < layer_taps.size(); ++i) o << (i ? "," : "") << layer_taps[i];
  o << "\nweights_source=" << weights_source << "\n";
  return o.str();
}

// ---- tensor conversion ----

template <typename T>
Tensor<T> to_tensor(const std::vector<Image>& batch) {
  if (batch.empty()) throw ShapeError("empty image batch");
  const Image& first = batch.front();
  Tensor<T> t(Shape{static_cast<int>(batch.size()), first.channels(), first.height(), first.width()});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Image& img = batch[n];
    if (!img.same_shape(first))
      throw ShapeError("batch mixes shapes " + first.shape_string() + " and " + img.shape_string());
    for (int c = 0; c < img.channels(); ++c) {
      T* p = t.plane(static_cast<int>(n), c);
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) p[y * img.width() + x] = static_cast<T>(img.at(y, x, c));
    }
  }
  return t;
}

template <typename T>
Image to_image(const Tensor<T>& t, int index) {
  const Shape s = t.shape();
  Image img(s.h, s.w, s.c);
  for (int c = 0; c < s.c; ++c) {
    const T* p = t.plane(index, c);
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) img.at(y, x, c) = static_cast<double>(p[y * s.w + x]);
  }
  return img;
}

// ---- generator ----

template <typename T>
Generator<T>::Generator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  auto conv = [&](const std::string& name, int cout, int cin, int k, bool bias) {
    p_[name + ".weight"] = this->add_normal(name + ".weight", Shape{cout, cin, k, k}, 0.02, rng);
    if (bias) p_[name + ".bias"] = this->add_param(name + ".bias", Shape{1, cout, 1, 1}, T(0));
  };
  auto norm = [&](const std::string& name, int c) {
    p_[name + ".gamma"] = this->add_param(name + ".gamma", Shape{1, c, 1, 1}, T(1));
    p_[name + ".beta"] = this->add_param(name + ".beta", Shape{1, c, 1, 1}, T(0));
  };
  int w = spec_.base_width;
  conv("in.conv", w, spec_.input_channels, 7, false);
  norm("in.norm", w);
  for (int i = 1; i <= spec_.n_down; ++i, w *= 2) {
    conv("down" + std::to_string(i) + ".conv", w * 2, w, 3, false);
    norm("down" + std::to_string(i) + ".norm", w * 2);
  }
  for (int r = 1; r <= spec_.n_res; ++r) {
    const std::string p = "res" + std::to_string(r);
    conv(p + ".conv1", w, w, 3, false);
    norm(p + ".norm1", w);
    conv(p + ".conv2", w, w, 3, false);
    norm(p + ".norm2", w);
  }
  for (int i = 1; i <= spec_.n_down; ++i, w /= 2) {
    conv("up" + std::to_string(i) + ".conv", w / 2, w, 3, false);
    norm("up" + std::to_string(i) + ".norm", w / 2);
  }
  conv("out.conv", spec_.input_channels, w, 7, true);
}

template <typename T>
Var<T> Generator<T>::norm(const Var<T>& x, const std::string& prefix) const {
  const Var<T>& g = p_.at(prefix + ".gamma");
  const Var<T>& b = p_.at(prefix + ".beta");
  return spec_.norm == NormKind::instance ? nn::instance_norm(x, g, b) : nn::batch_norm(x, g, b);
}

template <typename T>
Var<T> Generator<T>::forward(const Var<T>& hazy) const {
  const Shape s = hazy.shape();
  const int mult = 1 << spec_.n_down;
  if (s.c != spec_.input_channels)
    throw ShapeError("generator expects " + std::to_string(spec_.input_channels) +
                     " channels, got " + std::to_string(s.c));
  if (s.h % mult || s.w % mult)
    throw ShapeError("generator input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     ": spatial dims must be multiples of " + std::to_string(mult));
  const Var<T> none;
  Var<T> x = nn::affine(hazy, T(2), T(-1));
  x = nn::conv2d(nn::reflect_pad(x, 3), p_.at("in.conv.weight"), none, 1, 0);
  x = nn::relu(norm(x, "in.norm"));
  for (int i = 1; i <= spec_.n_down; ++i) {
    const std::string p = "down" + std::to_string(i);
    x = nn::relu(norm(nn::conv2d(x, p_.at(p + ".conv.weight"), none, 2, 1), p + ".norm"));
  }
  for (int r = 1; r <= spec_.n_res; ++r) {
    const std::string p = "res" + std::to_string(r);
    Var<T> y = nn::conv2d(nn::reflect_pad(x, 1), p_.at(p + ".conv1.weight"), none, 1, 0);
    y = nn::relu(norm(y, p + ".norm1"));
    y = nn::conv2d(nn::reflect_pad(y, 1), p_.at(p + ".conv2.weight"), none, 1, 0);
    x = nn::add(x, norm(y, p + ".norm2"));
  }
  for (int i = 1; i <= spec_.n_down; ++i) {
    const std::string p = "up" + std::to_string(i);
    x = nn::conv2d(nn::upsample_nearest2x(x), p_.at(p + ".conv.weight"), none, 1, 1);
    x = nn::relu(norm(x, p + ".norm"));
  }
  x = nn::conv2d(nn::reflect_pad(x, 3), p_.at("out.conv.weight"), p_.at("out.conv.bias"), 1, 0);
  return nn::affine(nn::tanh(x), T(0.5), T(0.5));
}

template <typename T>
void Generator<T>::zero_output_layer() {
  p_.at("out.conv.weight").mutable_value().fill(T(0));
  p_.at("out.conv.bias").mutable_value().fill(T(0));
}

// ---- discriminator ----

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  int cin = 2 * spec_.input_channels;
  for (int i = 1; i <= spec_.patch_levels; ++i) {
    const int cout = spec_.base_width << std::min(i - 1, 3);
    const std::string p = "level" + std::to_string(i);
    p_[p + ".conv.weight"] = this->add_normal(p + ".conv.weight", Shape{cout, cin, 4, 4}, 0.02, rng);
    if (i == 1) {
      p_[p + ".conv.bias"] = this->add_param(p + ".conv.bias", Shape{1, cout, 1, 1}, T(0));
    } else {
      p_[p + ".norm.gamma"] = this->add_param(p + ".norm.gamma", Shape{1, cout, 1, 1}, T(1));
      p_[p + ".norm.beta"] = this->add_param(p + ".norm.beta", Shape{1, cout, 1, 1}, T(0));
    }
    cin = cout;
  }
  p_["score.weight"] = this->add_normal("score.weight", Shape{1, cin, 1, 1}, 0.02, rng);
  p_["score.bias"] = this->add_param("score.bias", Shape{1, 1, 1, 1}, T(0));
}

template <typename T>
Var<T> Discriminator<T>::forward(const Var<T>& condition, const Var<T>& candidate) const {
  const Shape a = condition.shape(), b = candidate.shape();
  if (!(a == b))
    throw ShapeError("discriminator pair shape mismatch: " + a.str() + " vs " + b.str());
  if (a.c != spec_.input_channels)
    throw ShapeError("discriminator expects " + std::to_string(spec_.input_channels) +
                     " channels per image, got " + std::to_string(a.c));
  const int mult = 1 << spec_.patch_levels;
  if (a.h % mult || a.w % mult)
    throw ShapeError("discriminator input spatial dims must be multiples of " + std::to_string(mult));
  if (spec_.receptive_field() >= std::min(a.h, a.w))
    throw ShapeError("receptive field " + std::to_string(spec_.receptive_field()) +
                     " covers the whole " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                     " input; not a patch discriminator");
  const Var<T> none;
  Var<T> x = nn::concat_channels(condition, candidate);
  for (int i = 1; i <= spec_.patch_levels; ++i) {
    const std::string p = "level" + std::to_string(i);
    if (i == 1) {
      x = nn::conv2d(x, p_.at(p + ".conv.weight"), p_.at(p + ".conv.bias"), 2, 1);
    } else {
      x = nn::conv2d(x, p_.at(p + ".conv.weight"), none, 2, 1);
      x = nn::instance_norm(x, p_.at(p + ".norm.gamma"), p_.at(p + ".norm.beta"));
    }
    x = nn::leaky_relu(x, T(0.2));
  }
  return nn::conv2d(x, p_.at("score.weight"), p_.at("score.bias"), 1, 0);
}

// ---- segmentation network ----

template <typename T>
SegNet<T>::SegNet(const SegNetSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  auto block = [&](const std::string& name, int cout, int cin) {
    const double he = std::sqrt(2.0 / (cin * 9));
    p_[name + ".weight"] = this->add_normal(name + ".weight", Shape{cout, cin, 3, 3}, he, rng);
    p_[name + ".gamma"] = this->add_param(name + ".gamma", Shape{1, cout, 1, 1}, T(1));
    p_[name + ".beta"] = this->add_param(name + ".beta", Shape{1, cout, 1, 1}, T(0));
  };
  auto width = [&](int level) { return spec_.base_width << level; };
  block("enc0", width(0), spec_.input_channels);
  for (int i = 1; i <= spec_.n_down; ++i) block("enc" + std::to_string(i), width(i), width(i - 1));
  for (int i = spec_.n_down; i >= 1; --i) {
    block("up" + std::to_string(i), width(i - 1), width(i));
    block("fuse" + std::to_string(i), width(i - 1), 2 * width(i - 1));
  }
  p_["head.weight"] = this->add_normal("head.weight", Shape{spec_.n_classes, width(0), 1, 1},
                                       std::sqrt(1.0 / width(0)), rng);
  p_["head.bias"] = this->add_param("head.bias", Shape{1, spec_.n_classes, 1, 1}, T(0));
}

template <typename T>
Var<T> SegNet<T>::block(const Var<T>& x, const std::string& name, int stride) const {
  Var<T> y = nn::conv2d(x, p_.at(name + ".weight"), Var<T>(), stride, 1);
  return nn::relu(nn::instance_norm(y, p_.at(name + ".gamma"), p_.at(name + ".beta")));
}

template <typename T>
Var<T> SegNet<T>::forward(const Var<T>& img) const {
  const Shape s = img.shape();
  const int mult = 1 << spec_.n_down;
  if (s.c != spec_.input_channels)
    throw ShapeError("segnet expects " + std::to_string(spec_.input_channels) + " channels, got " +
                     std::to_string(s.c));
  if (s.h % mult || s.w % mult)
    throw ShapeError("segnet input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     ": spatial dims must be multiples of " + std::to_string(mult));
  std::vector<Var<T>> skips;
  Var<T> x = block(nn::affine(img, T(2), T(-1)), "enc0", 1);
  skips.push_back(x);
  for (int i = 1; i <= spec_.n_down; ++i) {
    x = block(x, "enc" + std::to_string(i), 2);
    skips.push_back(x);
  }
  for (int i = spec_.n_down; i >= 1; --i) {
    x = block(nn::upsample_nearest2x(x), "up" + std::to_string(i), 1);
    x = block(nn::concat_channels(x, skips[i - 1]), "fuse" + std::to_string(i), 1);
  }
  return nn::conv2d(x, p_.at("head.weight"), p_.at("head.bias"), 1, 0);
}

template <typename T>
std::vector<SegLabelMap> SegNet<T>::predict(const Tensor<T>& img) const {
  const Tensor<T> scores = forward(Var<T>(img)).value();
  const Shape s = scores.shape();
  std::vector<SegLabelMap> out;
  for (int n = 0; n < s.n; ++n) {
    SegLabelMap m(s.h, s.w);
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        int best = 0;
        for (int c = 1; c < s.c; ++c)
          if (scores.at(n, c, y, x) > scores.at(n, best, y, x)) best = c;
        m.at(y, x) = static_cast<std::uint8_t>(best);
      }
    out.push_back(std::move(m));
  }
  return out;
}

// ---- perceptual extractor ----

template <typename T>
std::vector<typename PerceptualExtractor<T>::Stage> PerceptualExtractor<T>::architecture(bool vgg) {
  if (vgg)
    return {{"pool1", {64, 64}},
            {"pool2", {128, 128}},
            {"pool3", {256, 256, 256}},
            {"pool4", {512, 512, 512}},
            {"pool5", {512, 512, 512}}};
  return {{"pool1", {8}}, {"pool2", {16}}, {"pool3", {32}}};
}

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor(const PerceptualExtractorSpec& spec) : spec_(spec) {
  spec_.validate();
  vgg_ = spec_.weights_source.rfind("vgg16:", 0) == 0;
  const auto stages = architecture(vgg_);
  for (const auto& tap : spec_.layer_taps) {
    auto it = std::find_if(stages.begin(), stages.end(), [&](const Stage& s) { return s.pool_name == tap; });
    if (it == stages.end()) throw ConfigError("unknown perceptual tap '" + tap + "'");
    depth_ = std::max(depth_, static_cast<int>(it - stages.begin()) + 1);
  }

  std::uint64_t seed = 0;
  if (!vgg_) {
    try {
      seed = std::stoull(spec_.weights_source.substr(7));
    } catch (const std::exception&) {
      throw ConfigError("bad random extractor seed in '" + spec_.weights_source + "'");
    }
  }
  std::mt19937_64 rng(seed);
  int cin = 3;
  for (int s = 0; s < depth_; ++s) {
    for (std::size_t j = 0; j < stages[s].widths.size(); ++j) {
      const int cout = stages[s].widths[j];
      const std::string name = "conv" + std::to_string(s + 1) + "_" + std::to_string(j + 1);
      p_[name + ".weight"] =
          this->add_normal(name + ".weight", Shape{cout, cin, 3, 3}, std::sqrt(2.0 / (cin * 9)), rng);
      p_[name + ".bias"] = this->add_param(name + ".bias", Shape{1, cout, 1, 1}, T(0));
      cin = cout;
    }
  }

  if (vgg_) {
    const std::string path = spec_.weights_source.substr(6);
    if (path.empty()) throw LoadError("no VGG-16 weights snapshot configured");
    nn::Checkpoint ckpt = nn::read_checkpoint(path);
    if (ckpt.kind != "vgg16-features")
      throw LoadError("'" + path + "' holds a '" + ckpt.kind + "', expected vgg16-features");
    ckpt.kind = this->kind();
    nn::assign_checkpoint(ckpt, *this, false);
  }
  this->set_trainable(false);
}

template <typename T>
std::vector<Var<T>> PerceptualExtractor<T>::features(const Var<T>& img) const {
  if (img.shape().c != 3)
    throw ShapeError("perceptual extractor expects 3 channels, got " + std::to_string(img.shape().c));
  Var<T> x;
  if (vgg_) {
    T scale[3], shift[3];
    for (int c = 0; c < 3; ++c) {
      scale[c] = static_cast<T>(1.0 / kVggStd[c]);
      shift[c] = static_cast<T>(-kVggMean[c] / kVggStd[c]);
    }
    x = nn::channel_affine<T>(img, scale, shift);
  } else {
    x = nn::affine(img, T(2), T(-1));
  }
  const auto stages = architecture(vgg_);
  std::map<std::string, Var<T>> taps;
  for (int s = 0; s < depth_; ++s) {
    for (std::size_t j = 0; j < stages[s].widths.size(); ++j) {
      const std::string name = "conv" + std::to_string(s + 1) + "_" + std::to_string(j + 1);
      x = nn::relu(nn::conv2d(x, p_.at(name + ".weight"), p_.at(name + ".bias"), 1, 1));
    }
    x = nn::max_pool2x2(x);
    taps[stages[s].pool_name] = x;
  }
  std::vector<Var<T>> out;
  for (const auto& tap : spec_.layer_taps) out.push_back(taps.at(tap));
  return out;
}

template Tensor<float> to_tensor<float>(const std::vector<Image>&);
template Tensor<double> to_tensor<double>(const std::vector<Image>&);
template Image to_image<float>(const Tensor<float>&, int);
template Image to_image<double>(const Tensor<double>&, int);
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class SegNet<float>;
template class SegNet<double>;
template class PerceptualExtractor<float>;
template class PerceptualExtractor<double>;

}  // namespace dfs::models
