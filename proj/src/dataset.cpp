#include "dfs/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "dfs/error.hpp"
#include "dfs/seed.hpp"

namespace dfs::data {
namespace {

constexpr std::array<std::array<double, 3>, 5> kClassColor{{
    {0.0, 0.0, 0.0},
    {0.85, 0.2, 0.2},   // disc
    {0.2, 0.75, 0.25},  // square
    {0.2, 0.3, 0.85},   // triangle
    {0.9, 0.8, 0.2},    // diamond
}};

struct Shape {
  std::uint8_t cls;
  double cx, cy, r, depth;
  std::array<double, 3> color;
};

bool covers(const Shape& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (s.cls) {
    case kDisc:
      return dx * dx + dy * dy <= s.r * s.r;
    case kSquare:
      return std::abs(dx) <= 0.85 * s.r && std::abs(dy) <= 0.85 * s.r;
    case kTriangle:  // apex up
      return dy >= -s.r && dy <= s.r && std::abs(dx) <= (dy + s.r) / 2;
    default:
      return std::abs(dx) + std::abs(dy) <= s.r;
  }
}

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04d", prefix, i);
  return buf;
}

}  // namespace

double quantize(double v, int levels) { return std::round(std::clamp(v, 0.0, 1.0) * levels) / levels; }

Scene render_synthetic_scene(std::uint64_t seed, const std::string& id, const SyntheticOptions& opt) {
  if (opt.height < 8 || opt.width < 8) throw ValidationError("synthetic scenes need at least 8x8 pixels");
  if (!(opt.depth_max > 0)) throw ValidationError("depth_max must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int h = opt.height, w = opt.width;
  const double unit = opt.depth_max / 10.0;

  Scene s;
  s.id = id;
  s.clean = Image(h, w, 3);
  s.depth = haze::DepthMap{Raster<double>(h, w)};
  s.labels = SegLabelMap(h, w, kBackground);
  s.instances = InstanceMap(h, w, 0);

  // muted gradient background, far at the top
  std::array<double, 3> top, bottom;
  const double g0 = 0.3 + 0.3 * u(rng), g1 = 0.3 + 0.3 * u(rng);
  for (int c = 0; c < 3; ++c) {
    top[c] = g0 + 0.16 * (u(rng) - 0.5);
    bottom[c] = g1 + 0.16 * (u(rng) - 0.5);
  }
  for (int y = 0; y < h; ++y) {
    const double f = (y + 0.5) / h;
    const double d = (8.0 - 6.0 * f) * unit;
    for (int x = 0; x < w; ++x) {
      s.depth.meters.at(y, x) = d;
      for (int c = 0; c < 3; ++c) s.clean.at(y, x, c) = top[c] * (1 - f) + bottom[c] * f;
    }
  }

  const int count = std::uniform_int_distribution<int>(1, 5)(rng);
  std::vector<Shape> shapes;
  const double side = std::min(h, w);
  for (int k = 0; k < count; ++k) {
    Shape sh;
    sh.cls = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(1, 4)(rng));
    sh.r = (0.12 + 0.13 * u(rng)) * side;
    sh.cx = sh.r * 0.5 + u(rng) * (w - sh.r);
    sh.cy = sh.r * 0.5 + u(rng) * (h - sh.r);
    sh.depth = (0.5 + 2.0 * u(rng)) * unit;
    for (int c = 0; c < 3; ++c) sh.color[c] = std::clamp(kClassColor[sh.cls][c] + 0.16 * (u(rng) - 0.5), 0.0, 1.0);
    shapes.push_back(sh);
  }
  // painter's order: far shapes first, instance ids follow creation order
  std::vector<int> order(count);
  for (int k = 0; k < count; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return shapes[a].depth > shapes[b].depth; });
  for (int k : order) {
    const Shape& sh = shapes[k];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!covers(sh, x + 0.5, y + 0.5)) continue;
        s.labels.at(y, x) = sh.cls;
        s.instances.at(y, x) = static_cast<std::uint16_t>(k + 1);
        s.depth.meters.at(y, x) = sh.depth;
        for (int c = 0; c < 3; ++c) s.clean.at(y, x, c) = sh.color[c];
      }
  }

  // sensor noise, then storage quantization
  std::normal_distribution<double> noise(0.0, 0.01);
  for (double& v : s.clean.values()) v = quantize(v + noise(rng), 255);
  for (double& d : s.depth.meters.values()) d = quantize(d / opt.depth_max, 65535) * opt.depth_max;

  static constexpr double kBetas[] = {0.4, 0.7, 1.0};
  static constexpr double kAirlights[] = {0.7, 0.8, 0.9};
  s.haze = haze::HazeParams::gray(kBetas[std::uniform_int_distribution<int>(0, 2)(rng)] / unit,
                                  kAirlights[std::uniform_int_distribution<int>(0, 2)(rng)]);
  s.hazy = haze::synthesize_haze(s.clean, haze::depth_to_transmission(s.depth, s.haze), s.haze);
  for (double& v : s.hazy.values()) v = quantize(v, 65535);
  return s;
}

SplitCounts split_counts(int n) {
  if (n < 0) throw ValidationError("negative scene count");
  const int trainval = static_cast<int>(std::lround(0.8 * n));
  const int train = static_cast<int>(std::lround(0.8 * trainval));
  return {train, trainval - train, n - trainval};
}

Benchmark synthetic_benchmark(int n, std::uint64_t seed, int n_segnet, const SyntheticOptions& opt) {
  if (n < 8) throw ValidationError("synthetic benchmark needs n >= 8, got " + std::to_string(n));
  if (n_segnet < 0) throw ValidationError("negative SEG-NET scene count");
  const SplitCounts sc = split_counts(n);
  Benchmark b;
  for (int i = 0; i < n; ++i) {
    Scene s = render_synthetic_scene(derive_seed(seed, 1, i), numbered("scene", i), opt);
    auto& dst = i < sc.train ? b.train : i < sc.train + sc.val ? b.val : b.test;
    dst.push_back(std::move(s));
  }
  for (int i = 0; i < n_segnet; ++i)
    b.segnet_train.push_back(render_synthetic_scene(derive_seed(seed, 2, i), numbered("segnet", i), opt));
  return b;
}

namespace {

struct Window {
  int x0, y0, size_w, size_h;
};

std::vector<Window> windows_for(int h, int w, models::Profile profile, PreprocessPath path, int& out_side) {
  if (profile == models::Profile::tiny) {
    out_side = 32;
    return {{0, 0, w, h}};
  }
  out_side = 256;
  if (path == PreprocessPath::dhazy) return {{0, 0, w, h}};
  if (w != 2 * h)
    throw ValidationError("paper-profile preprocessing needs a 2:1 frame, got " + std::to_string(w) + "x" +
                          std::to_string(h));
  return {{0, 0, h, h}, {h, 0, h, h}};
}

}  // namespace

std::vector<Image> preprocess(const Image& img, models::Profile profile, PreprocessPath path) {
  int side = 0;
  std::vector<Image> out;
  for (const auto& win : windows_for(img.height(), img.width(), profile, path, side))
    out.push_back(resize_bilinear(crop(img, win.x0, win.y0, win.size_w, win.size_h), side, side));
  return out;
}

std::vector<Scene> preprocess(const Scene& scene, models::Profile profile, PreprocessPath path) {
  int side = 0;
  const auto wins = windows_for(scene.clean.height(), scene.clean.width(), profile, path, side);
  std::vector<Scene> out;
  for (std::size_t k = 0; k < wins.size(); ++k) {
    const auto& win = wins[k];
    Scene s;
    s.id = wins.size() == 1 ? scene.id : scene.id + "#" + std::to_string(k);
    s.haze = scene.haze;
    s.clean = resize_bilinear(crop(scene.clean, win.x0, win.y0, win.size_w, win.size_h), side, side);
    if (!scene.hazy.empty())
      s.hazy = resize_bilinear(crop(scene.hazy, win.x0, win.y0, win.size_w, win.size_h), side, side);
    if (scene.labels.size())
      s.labels = resize_nearest(crop(scene.labels, win.x0, win.y0, win.size_w, win.size_h), side, side);
    if (scene.instances.size())
      s.instances = resize_nearest(crop(scene.instances, win.x0, win.y0, win.size_w, win.size_h), side, side);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Scene> preprocess_all(const std::vector<Scene>& scenes, models::Profile profile, PreprocessPath path) {
  std::vector<Scene> out;
  for (const auto& s : scenes)
    for (auto& p : preprocess(s, profile, path)) out.push_back(std::move(p));
  return out;
}

}  // namespace dfs::data
