#include "dfs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "dfs/error.hpp"

namespace dfs::metrics {
namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same(const Image& a, const Image& b) {
  if (!a.same_shape(b))
    throw ShapeError("image shape mismatch: " + a.shape_string() + " vs " + b.shape_string());
  if (a.empty()) throw ShapeError("empty image");
}

double ssim_from_moments(double mx, double my, double vx, double vy, double cxy) {
  return ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
}

// Box-window SSIM via summed-area tables.
double ssim_uniform(const Image& x, const Image& y, int win) {
  const int H = x.height(), W = x.width();
  const int S = W + 1;
  std::vector<double> sx((H + 1) * S), sy(sx.size()), sxx(sx.size()), syy(sx.size()), sxy(sx.size());
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double a = x.at(i, j, 0), b = y.at(i, j, 0);
      const int k = (i + 1) * S + j + 1, up = i * S + j + 1, left = (i + 1) * S + j, diag = i * S + j;
      sx[k] = a + sx[up] + sx[left] - sx[diag];
      sy[k] = b + sy[up] + sy[left] - sy[diag];
      sxx[k] = a * a + sxx[up] + sxx[left] - sxx[diag];
      syy[k] = b * b + syy[up] + syy[left] - syy[diag];
      sxy[k] = a * b + sxy[up] + sxy[left] - sxy[diag];
    }
  auto box = [&](const std::vector<double>& s, int i, int j) {
    return s[(i + win) * S + j + win] - s[i * S + j + win] - s[(i + win) * S + j] + s[i * S + j];
  };
  const double n = static_cast<double>(win) * win;
  double total = 0;
  for (int i = 0; i + win <= H; ++i)
    for (int j = 0; j + win <= W; ++j) {
      const double mx = box(sx, i, j) / n, my = box(sy, i, j) / n;
      const double vx = box(sxx, i, j) / n - mx * mx;
      const double vy = box(syy, i, j) / n - my * my;
      const double cxy = box(sxy, i, j) / n - mx * my;
      total += ssim_from_moments(mx, my, vx, vy, cxy);
    }
  return total / ((H - win + 1.0) * (W - win + 1.0));
}

// Separable Gaussian-window SSIM over valid positions.
double ssim_gaussian(const Image& x, const Image& y) {
  constexpr int win = 11;
  constexpr double sigma = 1.5;
  std::array<double, win> g{};
  double gsum = 0;
  for (int i = 0; i < win; ++i) {
    const double d = i - win / 2;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;
  const int H = x.height(), W = x.width();
  const int Ho = H - win + 1, Wo = W - win + 1;
  auto filter = [&](auto&& pixel) {
    std::vector<double> rows(static_cast<std::size_t>(H) * Wo);
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < Wo; ++j) {
        double s = 0;
        for (int k = 0; k < win; ++k) s += g[k] * pixel(i, j + k);
        rows[static_cast<std::size_t>(i) * Wo + j] = s;
      }
    std::vector<double> out(static_cast<std::size_t>(Ho) * Wo);
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        double s = 0;
        for (int k = 0; k < win; ++k) s += g[k] * rows[static_cast<std::size_t>(i + k) * Wo + j];
        out[static_cast<std::size_t>(i) * Wo + j] = s;
      }
    return out;
  };
  auto mx = filter([&](int i, int j) { return x.at(i, j, 0); });
  auto my = filter([&](int i, int j) { return y.at(i, j, 0); });
  auto mxx = filter([&](int i, int j) { return x.at(i, j, 0) * x.at(i, j, 0); });
  auto myy = filter([&](int i, int j) { return y.at(i, j, 0) * y.at(i, j, 0); });
  auto mxy = filter([&](int i, int j) { return x.at(i, j, 0) * y.at(i, j, 0); });
  double total = 0;
  for (std::size_t k = 0; k < mx.size(); ++k)
    total += ssim_from_moments(mx[k], my[k], mxx[k] - mx[k] * mx[k], myy[k] - my[k] * my[k],
                               mxy[k] - mx[k] * my[k]);
  return total / static_cast<double>(mx.size());
}

void check_labels(const SegLabelMap& m, int n_classes, bool allow_ignore, const char* what) {
  for (std::uint8_t l : m.values()) {
    if (l == kIgnoreLabel && allow_ignore) continue;
    if (l >= n_classes)
      throw ValidationError(std::string(what) + " label " + std::to_string(l) + " out of range for " +
                            std::to_string(n_classes) + " classes");
  }
}

// Pixel count per instance id, and the class each id belongs to.
struct InstanceStats {
  std::unordered_map<std::uint16_t, std::size_t> size;
  std::unordered_map<std::uint16_t, int> cls;
};

InstanceStats instance_stats(const SegLabelMap& gt, const InstanceMap& inst, const Taxonomy& tax) {
  if (!gt.same_shape(inst)) throw ShapeError("instance map does not match label map shape");
  InstanceStats st;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint16_t id = inst.values()[i];
    const std::uint8_t l = gt.values()[i];
    if (id == 0 || l == kIgnoreLabel) continue;
    if (l >= tax.n_classes()) throw ValidationError("label out of range in instance statistics");
    auto [it, fresh] = st.cls.emplace(id, l);
    if (!fresh && it->second != l)
      throw ValidationError("instance " + std::to_string(id) + " spans classes " +
                            std::to_string(it->second) + " and " + std::to_string(l));
    ++st.size[id];
  }
  return st;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same(a, b);
  double s = 0;
  auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    s += d * d;
  }
  return s / static_cast<double>(va.size());
}

double psnr_from_mse(double m) {
  if (m < 0 || !std::isfinite(m)) throw NumericError("invalid mse " + std::to_string(m));
  if (m == 0) return kPsnrCap;
  return 10.0 * std::log10(1.0 / m);
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

double ssim(const Image& a, const Image& b, SsimWindow window) {
  require_same(a, b);
  const int need = window == SsimWindow::uniform8 ? 8 : 11;
  if (a.height() < need || a.width() < need)
    throw ValidationError("image " + a.shape_string() + " smaller than the " + std::to_string(need) +
                          "x" + std::to_string(need) + " SSIM window");
  const Image x = to_grayscale(a), y = to_grayscale(b);
  return window == SsimWindow::uniform8 ? ssim_uniform(x, y, 8) : ssim_gaussian(x, y);
}

// ---- taxonomy ----

bool Taxonomy::category_has_instances(int category) const {
  for (int c = 0; c < n_classes(); ++c)
    if (category_of[c] == category && has_instances[c]) return true;
  return false;
}

void Taxonomy::validate() const {
  if (class_names.empty()) throw ConfigError("taxonomy without classes");
  if (category_of.size() != class_names.size() || has_instances.size() != class_names.size())
    throw ConfigError("taxonomy tables have inconsistent lengths");
  for (int cat : category_of)
    if (cat < 0 || cat >= n_categories())
      throw ConfigError("taxonomy maps a class to unknown category " + std::to_string(cat));
}

Taxonomy Taxonomy::synthetic() {
  return Taxonomy{{"background", "disc", "square", "triangle", "diamond"},
                  {0, 1, 2, 2, 2},
                  {"scene", "round", "polygon"},
                  {false, true, true, true, true}};
}

Taxonomy Taxonomy::cityscapes() {
  // categories: 0 flat, 1 construction, 2 object, 3 nature, 4 sky, 5 human, 6 vehicle
  return Taxonomy{{"road", "sidewalk", "building", "wall", "fence", "pole", "traffic light",
                   "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car", "truck",
                   "bus", "train", "motorcycle", "bicycle"},
                  {0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 4, 5, 5, 6, 6, 6, 6, 6, 6},
                  {"flat", "construction", "object", "nature", "sky", "human", "vehicle"},
                  {false, false, false, false, false, false, false, false, false, false, false, true,
                   true, true, true, true, true, true, true}};
}

InstanceSizeTable instance_sizes(const std::vector<SegLabelMap>& gts,
                                 const std::vector<InstanceMap>& instances, const Taxonomy& tax) {
  if (gts.size() != instances.size()) throw ShapeError("label/instance list length mismatch");
  std::vector<double> cls_sum(tax.n_classes()), cat_sum(tax.n_categories());
  std::vector<std::size_t> cls_n(tax.n_classes()), cat_n(tax.n_categories());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const InstanceStats st = instance_stats(gts[i], instances[i], tax);
    for (const auto& [id, size] : st.size) {
      const int c = st.cls.at(id);
      if (!tax.has_instances[c]) continue;
      cls_sum[c] += static_cast<double>(size);
      ++cls_n[c];
      cat_sum[tax.category_of[c]] += static_cast<double>(size);
      ++cat_n[tax.category_of[c]];
    }
  }
  InstanceSizeTable t;
  for (int c = 0; c < tax.n_classes(); ++c) t.class_mean.push_back(cls_n[c] ? cls_sum[c] / cls_n[c] : 0);
  for (int c = 0; c < tax.n_categories(); ++c)
    t.category_mean.push_back(cat_n[c] ? cat_sum[c] / cat_n[c] : 0);
  return t;
}

// ---- confusion ----

ConfusionMatrix::ConfusionMatrix(int classes, int categories)
    : n_classes(classes),
      counts(static_cast<std::size_t>(classes) * classes, 0),
      weighted_tp(classes, 0.0),
      weighted_fn(classes, 0.0),
      category_weighted_tp(categories, 0.0),
      category_weighted_fn(categories, 0.0) {}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  if (o.n_classes != n_classes || o.category_weighted_tp.size() != category_weighted_tp.size())
    throw ShapeError("cannot sum confusion matrices of different shapes");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  for (int c = 0; c < n_classes; ++c) {
    weighted_tp[c] += o.weighted_tp[c];
    weighted_fn[c] += o.weighted_fn[c];
  }
  for (std::size_t c = 0; c < category_weighted_tp.size(); ++c) {
    category_weighted_tp[c] += o.category_weighted_tp[c];
    category_weighted_fn[c] += o.category_weighted_fn[c];
  }
  has_instances = has_instances || o.has_instances;
  return *this;
}

ConfusionMatrix confusion(const SegLabelMap& pred, const SegLabelMap& gt, const Taxonomy& tax,
                          const InstanceMap* instances, const InstanceSizeTable* sizes) {
  tax.validate();
  if (!pred.same_shape(gt)) throw ShapeError("prediction and GT label maps differ in shape");
  check_labels(pred, tax.n_classes(), false, "predicted");
  check_labels(gt, tax.n_classes(), true, "GT");

  ConfusionMatrix m(tax.n_classes(), tax.n_categories());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint8_t g = gt.values()[i];
    if (g == kIgnoreLabel) continue;
    ++m.counts[static_cast<std::size_t>(g) * m.n_classes + pred.values()[i]];
  }
  if (!instances) return m;

  m.has_instances = true;
  const InstanceStats st = instance_stats(gt, *instances, tax);
  InstanceSizeTable local;
  if (!sizes) {
    local = instance_sizes({gt}, {*instances}, tax);
    sizes = &local;
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint16_t id = instances->values()[i];
    const std::uint8_t g = gt.values()[i];
    if (id == 0 || g == kIgnoreLabel || !tax.has_instances[g]) continue;
    const double size = static_cast<double>(st.size.at(id));
    const std::uint8_t p = pred.values()[i];
    const double w_cls = sizes->class_mean[g] / size;
    (p == g ? m.weighted_tp : m.weighted_fn)[g] += w_cls;
    const int cat = tax.category_of[g];
    const double w_cat = sizes->category_mean[cat] / size;
    (tax.category_of[p] == cat ? m.category_weighted_tp : m.category_weighted_fn)[cat] += w_cat;
  }
  return m;
}

namespace {

// Collapses the class matrix to the requested grouping.
std::vector<std::uint64_t> grouped_counts(const ConfusionMatrix& m, const Taxonomy& tax, Grouping g,
                                          int& groups) {
  if (g == Grouping::classes) {
    groups = m.n_classes;
    return m.counts;
  }
  groups = tax.n_categories();
  std::vector<std::uint64_t> out(static_cast<std::size_t>(groups) * groups, 0);
  for (int a = 0; a < m.n_classes; ++a)
    for (int b = 0; b < m.n_classes; ++b)
      out[static_cast<std::size_t>(tax.category_of[a]) * groups + tax.category_of[b]] += m.at(a, b);
  return out;
}

}  // namespace

double iou_from_confusion(const ConfusionMatrix& m, const Taxonomy& tax, Grouping grouping) {
  tax.validate();
  if (m.n_classes != tax.n_classes()) throw ShapeError("confusion matrix does not match taxonomy");
  if (m.total() == 0) throw ValidationError("empty confusion matrix");
  int groups = 0;
  const auto counts = grouped_counts(m, tax, grouping, groups);
  // extended accumulation so small rational cases round correctly
  long double sum = 0;
  int used = 0;
  for (int c = 0; c < groups; ++c) {
    std::uint64_t tp = counts[static_cast<std::size_t>(c) * groups + c], row = 0, col = 0;
    for (int k = 0; k < groups; ++k) {
      row += counts[static_cast<std::size_t>(c) * groups + k];
      col += counts[static_cast<std::size_t>(k) * groups + c];
    }
    const std::uint64_t denom = row + col - tp;
    if (denom == 0) continue;
    sum += static_cast<long double>(tp) / static_cast<long double>(denom);
    ++used;
  }
  return static_cast<double>(sum / used);
}

double iiou_from_confusion(const ConfusionMatrix& m, const Taxonomy& tax, Grouping grouping) {
  tax.validate();
  if (!m.has_instances)
    throw ValidationError("iIoU needs instance weights: pass an InstanceMap to confusion()");
  if (m.n_classes != tax.n_classes()) throw ShapeError("confusion matrix does not match taxonomy");
  int groups = 0;
  const auto counts = grouped_counts(m, tax, grouping, groups);
  long double sum = 0;
  int used = 0;
  for (int c = 0; c < groups; ++c) {
    const bool inst = grouping == Grouping::classes ? tax.has_instances[c] : tax.category_has_instances(c);
    if (!inst) continue;
    std::uint64_t fp = 0;
    for (int k = 0; k < groups; ++k)
      if (k != c) fp += counts[static_cast<std::size_t>(k) * groups + c];
    const double wtp = grouping == Grouping::classes ? m.weighted_tp[c] : m.category_weighted_tp[c];
    const double wfn = grouping == Grouping::classes ? m.weighted_fn[c] : m.category_weighted_fn[c];
    const long double denom = static_cast<long double>(wtp) + fp + wfn;
    if (denom == 0) continue;
    sum += wtp / denom;
    ++used;
  }
  if (used == 0) throw ValidationError("no instance-annotated group present in the evaluation");
  return static_cast<double>(sum / used);
}

// ---- rendering ----

Palette Palette::synthetic_v1() {
  return Palette{"synthetic-v1",
                 {{0, {128, 64, 128}},
                  {1, {220, 20, 60}},
                  {2, {0, 0, 142}},
                  {3, {250, 170, 30}},
                  {4, {107, 142, 35}},
                  {kIgnoreLabel, {0, 0, 0}}}};
}

Palette Palette::cityscapes_v1() {
  const std::array<std::array<std::uint8_t, 3>, 19> c{{{128, 64, 128}, {244, 35, 232}, {70, 70, 70},
                                                       {102, 102, 156}, {190, 153, 153}, {153, 153, 153},
                                                       {250, 170, 30}, {220, 220, 0}, {107, 142, 35},
                                                       {152, 251, 152}, {70, 130, 180}, {220, 20, 60},
                                                       {255, 0, 0}, {0, 0, 142}, {0, 0, 70},
                                                       {0, 60, 100}, {0, 80, 100}, {0, 0, 230},
                                                       {119, 11, 32}}};
  Palette p{"cityscapes-v1", {}};
  for (std::size_t i = 0; i < c.size(); ++i) p.colors[static_cast<std::uint8_t>(i)] = c[i];
  p.colors[kIgnoreLabel] = {0, 0, 0};
  return p;
}

Image render(const SegLabelMap& labels, const Palette& palette) {
  Image out(labels.height(), labels.width(), 3);
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x) {
      auto it = palette.colors.find(labels.at(y, x));
      if (it == palette.colors.end())
        throw ValidationError("palette " + palette.version + " has no color for label " +
                              std::to_string(labels.at(y, x)));
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = it->second[c] / 255.0;
    }
  return out;
}

std::pair<double, double> segmap_psnr_ssim(const SegLabelMap& pred, const SegLabelMap& gt,
                                           const Palette& palette, SsimWindow window) {
  if (!pred.same_shape(gt)) throw ShapeError("segmentation maps differ in shape");
  const Image a = render(pred, palette), b = render(gt, palette);
  return {psnr(a, b), ssim(a, b, window)};
}

// ---- reports ----

std::string to_string(Arm arm) {
  switch (arm) {
    case Arm::hazy: return "Hazy";
    case Arm::dehaze: return "Dehaze";
    case Arm::dfs: return "DFS";
    case Arm::gt: return "GT";
  }
  return "?";
}

Arm parse_arm(const std::string& s) {
  for (Arm a : kArms) {
    std::string name = to_string(a);
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    if (s == name || s == lower) return a;
  }
  throw ValidationError("unknown arm '" + s + "'");
}

ReportAccumulator::ReportAccumulator(Arm arm, Taxonomy tax, Palette palette, SsimWindow window)
    : arm_(arm), tax_(std::move(tax)), palette_(std::move(palette)), window_(window),
      confusion_(tax_.n_classes(), tax_.n_categories()) {}

void ReportAccumulator::add_image(const Image& output, const Image& reference) {
  mse_sum_ += mse(output, reference);
  ssim_sum_ += ssim(output, reference, window_);
  ++images_;
}

void ReportAccumulator::add_segmentation(const SegLabelMap& pred, const SegLabelMap& gt,
                                         const InstanceMap* instances, const InstanceSizeTable* sizes) {
  confusion_ += confusion(pred, gt, tax_, instances, sizes);
  ++segs_;
}

void ReportAccumulator::add_segmap(const SegLabelMap& pred, const SegLabelMap& gt) {
  const Image a = render(pred, palette_), b = render(gt, palette_);
  seg_mse_sum_ += mse(a, b);
  seg_ssim_sum_ += ssim(a, b, window_);
  ++segmaps_;
}

void ReportAccumulator::add_seg_loss(double value, std::size_t weight) {
  seg_loss_sum_ += value * static_cast<double>(weight);
  seg_loss_weight_ += weight;
}

MetricsReport ReportAccumulator::report() const {
  MetricsReport r;
  r.arm = arm_;
  if (images_ > 0) {
    r.mse = mse_sum_ / static_cast<double>(images_);
    r.psnr = psnr_from_mse(r.mse);
    r.ssim = ssim_sum_ / static_cast<double>(images_);
  }
  if (segmaps_ > 0) {
    r.seg_psnr = psnr_from_mse(seg_mse_sum_ / static_cast<double>(segmaps_));
    r.seg_ssim = seg_ssim_sum_ / static_cast<double>(segmaps_);
  }
  if (segs_ > 0) {
    r.iou_cl = iou_from_confusion(confusion_, tax_, Grouping::classes);
    r.iou_ca = iou_from_confusion(confusion_, tax_, Grouping::categories);
    if (confusion_.has_instances) {
      r.iiou_cl = iiou_from_confusion(confusion_, tax_, Grouping::classes);
      r.iiou_ca = iiou_from_confusion(confusion_, tax_, Grouping::categories);
    }
  }
  if (seg_loss_weight_ > 0) r.seg_loss = seg_loss_sum_ / static_cast<double>(seg_loss_weight_);
  return r;
}

Taxonomy taxonomy_by_name(const std::string& name) {
  if (name == "synthetic") return Taxonomy::synthetic();
  if (name == "cityscapes") return Taxonomy::cityscapes();
  throw ConfigError("unknown taxonomy '" + name + "' (expected synthetic or cityscapes)");
}

Palette palette_for_taxonomy(const std::string& name) {
  if (name == "cityscapes") return Palette::cityscapes_v1();
  if (name == "synthetic") return Palette::synthetic_v1();
  throw ConfigError("unknown taxonomy '" + name + "' (expected synthetic or cityscapes)");
}

}  // namespace dfs::metrics
