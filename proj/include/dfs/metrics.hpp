#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dfs/image.hpp"

namespace dfs::metrics {

// Reported PSNR for identical images.
inline constexpr double kPsnrCap = 99.0;

double mse(const Image& a, const Image& b);
double psnr_from_mse(double mse);
double psnr(const Image& a, const Image& b);

enum class SsimWindow {
  uniform8,    // 8x8 box window, stride 1
  gaussian11,  // 11x11 Gaussian, sigma 1.5
};

// Mean local SSIM on the BT.601 luma of both images, unit dynamic range,
// C1 = 0.01^2, C2 = 0.03^2, statistics over "valid" window positions.
double ssim(const Image& a, const Image& b, SsimWindow window = SsimWindow::uniform8);

// Class list with category grouping and instance-annotated flags.
struct Taxonomy {
  std::vector<std::string> class_names;
  std::vector<int> category_of;
  std::vector<std::string> category_names;
  std::vector<bool> has_instances;

  int n_classes() const { return static_cast<int>(class_names.size()); }
  int n_categories() const { return static_cast<int>(category_names.size()); }
  bool category_has_instances(int category) const;
  void validate() const;

  static Taxonomy synthetic();
  // The 19 Cityscapes training classes.
  static Taxonomy cityscapes();
};

// Mean GT instance size per class and per category, in pixels. Zero where no
// instance exists.
struct InstanceSizeTable {
  std::vector<double> class_mean;
  std::vector<double> category_mean;
};

InstanceSizeTable instance_sizes(const std::vector<SegLabelMap>& gts,
                                 const std::vector<InstanceMap>& instances, const Taxonomy& tax);

struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<std::uint64_t> counts;  // row = GT, column = prediction
  bool has_instances = false;
  std::vector<double> weighted_tp;    // per class
  std::vector<double> weighted_fn;
  std::vector<double> category_weighted_tp;
  std::vector<double> category_weighted_fn;

  ConfusionMatrix() = default;
  ConfusionMatrix(int classes, int categories);

  std::uint64_t at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * n_classes + pred]; }
  std::uint64_t total() const;
  // Sums counts and weighted accumulators; shapes must agree.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

// Accumulates one prediction/GT pair. With `instances`, TP/FN pixels of
// instance classes are also accumulated with weight (mean instance size) /
// (size of the pixel's GT instance), using `sizes` or, when null, the
// statistics of this image alone.
ConfusionMatrix confusion(const SegLabelMap& pred, const SegLabelMap& gt, const Taxonomy& tax,
                          const InstanceMap* instances = nullptr,
                          const InstanceSizeTable* sizes = nullptr);

enum class Grouping { classes, categories };

// Mean of TP / (TP + FP + FN) over groups that occur in GT or prediction.
double iou_from_confusion(const ConfusionMatrix& m, const Taxonomy& tax, Grouping grouping);

// Mean of wTP / (wTP + FP + wFN) over instance-annotated groups; FP pixels
// carry weight 1.
double iiou_from_confusion(const ConfusionMatrix& m, const Taxonomy& tax, Grouping grouping);

// Fixed label -> RGB table used to render segmentations.
struct Palette {
  std::string version;
  std::map<std::uint8_t, std::array<std::uint8_t, 3>> colors;

  static Palette synthetic_v1();
  static Palette cityscapes_v1();
};

// Throws ValidationError if a label in `labels` has no palette entry.
Image render(const SegLabelMap& labels, const Palette& palette);

// PSNR and SSIM of the color renderings of two label maps.
std::pair<double, double> segmap_psnr_ssim(const SegLabelMap& pred, const SegLabelMap& gt,
                                           const Palette& palette,
                                           SsimWindow window = SsimWindow::uniform8);

// "synthetic" or "cityscapes"; anything else is a ConfigError.
Taxonomy taxonomy_by_name(const std::string& name);
Palette palette_for_taxonomy(const std::string& name);

enum class Arm { hazy, dehaze, dfs, gt };
inline constexpr std::array<Arm, 4> kArms{Arm::hazy, Arm::dehaze, Arm::dfs, Arm::gt};
std::string to_string(Arm arm);
Arm parse_arm(const std::string& s);

struct MetricsReport {
  Arm arm = Arm::hazy;
  double psnr = 0;
  double ssim = 0;
  double mse = 0;
  double iou_cl = 0;
  double iiou_cl = 0;
  double iou_ca = 0;
  double iiou_ca = 0;
  double seg_psnr = 0;  // color-rendered segmentation vs GT labels, pooled like psnr
  double seg_ssim = 0;
  double seg_loss = 0;  // training-time segmentation loss on held-out data
};

// Corpus-level accumulation for one arm. Image metrics are pooled: mse is the
// mean over images and psnr is derived from it; ssim is the mean over images.
class ReportAccumulator {
 public:
  ReportAccumulator(Arm arm, Taxonomy tax, Palette palette, SsimWindow window = SsimWindow::uniform8);

  void add_image(const Image& output, const Image& reference);
  // Feeds the IoU / iIoU confusion.
  void add_segmentation(const SegLabelMap& pred, const SegLabelMap& gt, const InstanceMap* instances,
                        const InstanceSizeTable* sizes);
  // Feeds seg_psnr / seg_ssim of the color renderings.
  void add_segmap(const SegLabelMap& pred, const SegLabelMap& gt);
  void add_seg_loss(double value, std::size_t weight);

  MetricsReport report() const;
  const ConfusionMatrix& confusion_matrix() const { return confusion_; }

 private:
  Arm arm_;
  Taxonomy tax_;
  Palette palette_;
  SsimWindow window_;
  std::size_t images_ = 0;
  double mse_sum_ = 0, ssim_sum_ = 0;
  std::size_t segs_ = 0, segmaps_ = 0;
  double seg_mse_sum_ = 0, seg_ssim_sum_ = 0;
  double seg_loss_sum_ = 0;
  std::size_t seg_loss_weight_ = 0;
  ConfusionMatrix confusion_;
};

}  // namespace dfs::metrics
