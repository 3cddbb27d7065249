#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfs/haze.hpp"
#include "dfs/image.hpp"
#include "dfs/models.hpp"

// In-memory scenes and the procedural benchmark: colored shapes on gradient
// backgrounds with known depth, labels and instances.
namespace dfs::data {

struct Scene {
  std::string id;
  Image clean;
  Image hazy;
  haze::DepthMap depth;  // empty after preprocess()
  SegLabelMap labels;
  InstanceMap instances;
  haze::HazeParams haze;
};

// Class ids of the synthetic taxonomy.
enum SyntheticClass : std::uint8_t { kBackground = 0, kDisc = 1, kSquare = 2, kTriangle = 3, kDiamond = 4 };

struct SyntheticOptions {
  int height = 32;
  int width = 32;
  double depth_max = 10.0;  // depth PNGs map [0, depth_max] onto 16 bits
};

// Values are quantized to what the on-disk formats hold: clean to 8 bits,
// depth to 16 bits over [0, depth_max], hazy to 16 bits. Loading a written
// scene therefore reproduces it exactly.
Scene render_synthetic_scene(std::uint64_t seed, const std::string& id, const SyntheticOptions& opt);

double quantize(double v, int levels);

// 80/20 train+val/test, then 80/20 train/val, each rounded to nearest.
struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};
SplitCounts split_counts(int n);

struct Benchmark {
  std::vector<Scene> train, val, test;
  std::vector<Scene> segnet_train;  // disjoint scenes for SEG-NET pretraining
};

// n >= 8 dehazing scenes plus n_segnet SEG-NET scenes, all from one seed.
Benchmark synthetic_benchmark(int n, std::uint64_t seed, int n_segnet,
                              const SyntheticOptions& opt = {});

enum class PreprocessPath {
  cityscapes,  // 2:1 frames: left/right squares, then resize
  dhazy,       // plain resize
};

// Network-ready inputs: tiny profile resizes to 32x32; paper profile produces
// 256x256 crops per `path`. Throws ValidationError on a non 2:1 frame under
// the cityscapes path of the paper profile.
std::vector<Image> preprocess(const Image& img, models::Profile profile,
                              PreprocessPath path = PreprocessPath::cityscapes);

// Same geometry applied to every raster of the scene; labels and instances
// use nearest-neighbour resampling. Crop k gets id "<id>#k".
std::vector<Scene> preprocess(const Scene& scene, models::Profile profile,
                              PreprocessPath path = PreprocessPath::cityscapes);

std::vector<Scene> preprocess_all(const std::vector<Scene>& scenes, models::Profile profile,
                                  PreprocessPath path = PreprocessPath::cityscapes);

}  // namespace dfs::data
