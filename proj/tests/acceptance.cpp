// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every selected criterion passes.
//
//   acceptance [--only N]... [--work DIR] [--keep]

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include "dfs/error.hpp"
#include "dfs/haze.hpp"
#include "dfs/io.hpp"
#include "dfs/manifest.hpp"
#include "dfs/metrics.hpp"
#include "dfs/pipeline.hpp"
#include "dfs/report.hpp"
#include "dfs/training.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

#ifndef DFS_CLI_PATH
#error "DFS_CLI_PATH must name the dfs-dehaze executable"
#endif

namespace {

namespace fs = std::filesystem;
using namespace dfs;
using metrics::Arm;
using train::Regime;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Benchmark files and pretrained segmentation networks shared by criteria 4-7.
class Bench {
 public:
  explicit Bench(fs::path dir) : dir_(std::move(dir)) {}

  void ensure() {
    if (ready_) return;
    files_ = manifest::build_synthetic_benchmark(dir_, 64, 7, 64, true);
    auto load = [](const manifest::DatasetManifest& m) {
      return data::preprocess_all(manifest::load_scenes(m), models::Profile::tiny, data::PreprocessPath::dhazy);
    };
    train_ = load(files_.train);
    val_ = load(files_.val);
    test_ = load(files_.test);
    const auto segnet_scenes = load(files_.segnet_train);
    auto cfg = train::TrainConfig::defaults(Regime::segnet, models::Profile::tiny);
    const std::vector<const std::vector<data::Scene>*> others{&train_, &val_, &test_};
    segnet_ = train::train_segnet(cfg, segnet_scenes, models::SegNetSpec::for_profile(models::Profile::tiny), others).net;
    cfg.seed = 2;
    evaluator_ = train::train_segnet(cfg, segnet_scenes, models::SegNetSpec::evaluator_for_profile(models::Profile::tiny),
                                     others)
                     .net;
    ready_ = true;
  }
  const std::vector<data::Scene>& train() { return ensure(), train_; }
  const std::vector<data::Scene>& val() { return ensure(), val_; }
  const std::vector<data::Scene>& test() { return ensure(), test_; }
  models::SegNet<float>& segnet() { return ensure(), *segnet_; }
  models::SegNet<float>& evaluator() { return ensure(), *evaluator_; }
  const manifest::BenchmarkManifests& files() { return ensure(), files_; }

 private:
  fs::path dir_;
  bool ready_ = false;
  manifest::BenchmarkManifests files_;
  std::vector<data::Scene> train_, val_, test_;
  std::unique_ptr<models::SegNet<float>> segnet_, evaluator_;
};

// 1. Library metrics against the scalar-loop and rational oracles.
Outcome metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double d_mse = 0, d_psnr = 0, d_ssim = 0;
  for (int i = 0; i < 200; ++i) {
    const Image a = testing::random_image(16, 16, 3, rng), b = testing::random_image(16, 16, 3, rng);
    d_mse = std::max(d_mse, std::abs(metrics::mse(a, b) - oracle::mse(a, b)));
    d_psnr = std::max(d_psnr, std::abs(metrics::psnr(a, b) - oracle::psnr(a, b)));
    d_ssim = std::max(d_ssim, std::abs(metrics::ssim(a, b) - oracle::ssim_uniform8(a, b)));
    d_ssim = std::max(d_ssim, std::abs(metrics::ssim(a, b, metrics::SsimWindow::gaussian11) -
                                       oracle::ssim_gaussian11(a, b)));
  }

  // IoU / iIoU on random 16x16 scenes: compared with the correctly rounded
  // value of the exact rational result.
  const auto tax = metrics::Taxonomy::synthetic();
  const oracle::SegOracle by_class{{0, 1, 2, 3, 4}, {false, true, true, true, true}};
  const oracle::SegOracle by_cat{tax.category_of, {false, true, true}};
  int iou_exact = 0, iiou_exact = 0;
  double d_iiou = 0;
  auto flat8 = [](const SegLabelMap& m) { return std::vector<std::uint8_t>(m.values().begin(), m.values().end()); };
  auto flat16 = [](const InstanceMap& m) { return std::vector<std::uint16_t>(m.values().begin(), m.values().end()); };
  for (int i = 0; i < 200; ++i) {
    const auto f = testing::random_scene(tax, rng);
    const auto m = metrics::confusion(f.pred, f.gt, tax, &f.inst);
    const double iou[2] = {metrics::iou_from_confusion(m, tax, metrics::Grouping::classes),
                           metrics::iou_from_confusion(m, tax, metrics::Grouping::categories)};
    const double iou_ref[2] = {by_class.iou(flat8(f.pred), flat8(f.gt)).to_double(),
                               by_cat.iou(flat8(f.pred), flat8(f.gt)).to_double()};
    const double iiou[2] = {metrics::iiou_from_confusion(m, tax, metrics::Grouping::classes),
                            metrics::iiou_from_confusion(m, tax, metrics::Grouping::categories)};
    const double iiou_ref[2] = {by_class.iiou(flat8(f.pred), flat8(f.gt), flat16(f.inst)).to_double(),
                                by_cat.iiou(flat8(f.pred), flat8(f.gt), flat16(f.inst)).to_double()};
    for (int k = 0; k < 2; ++k) {
      iou_exact += iou[k] == iou_ref[k];
      iiou_exact += iiou[k] == iiou_ref[k];
      d_iiou = std::max(d_iiou, std::abs(iiou[k] - iiou_ref[k]));
    }
  }

  // toy cases with hand-derived rational answers
  const metrics::Taxonomy two{{"background", "car"}, {0, 1}, {"flat", "vehicle"}, {false, true}};
  SegLabelMap gt(2, 2), pred(2, 2);
  const int g4[] = {0, 0, 1, 1}, p4[] = {0, 1, 1, 1};
  for (int i = 0; i < 4; ++i) gt.values()[i] = g4[i], pred.values()[i] = p4[i];
  const bool toy_iou = metrics::iou_from_confusion(metrics::confusion(pred, gt, two), two, metrics::Grouping::classes) ==
                       oracle::Rational(7, 12).to_double();
  SegLabelMap g8(8, 8, 0), p8(8, 8, 0);
  InstanceMap i8(8, 8, 0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) g8.at(y, x) = p8.at(y, x) = 1, i8.at(y, x) = 1;
  for (int y = 5; y < 7; ++y)
    for (int x = 5; x < 7; ++x) g8.at(y, x) = 1, i8.at(y, x) = 2;
  const auto m8 = metrics::confusion(p8, g8, two, &i8);
  const bool toy_iiou = metrics::iiou_from_confusion(m8, two, metrics::Grouping::classes) == 0.5 &&
                        metrics::iiou_from_confusion(m8, two, metrics::Grouping::categories) == 0.5;

  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = d_mse <= 1e-9 && d_psnr <= 1e-9 && d_ssim <= 1e-6 && iou_exact == 400 && toy_iou && toy_iiou &&
           d_iiou <= 1e-12 && secs < 30;
  o.detail = "max |dMSE| " + fmt("%.1e", d_mse) + ", |dPSNR| " + fmt("%.1e", d_psnr) + ", |dSSIM| " +
             fmt("%.1e", d_ssim) + "; IoU exact " + std::to_string(iou_exact) + "/400, iIoU exact " +
             std::to_string(iiou_exact) + "/400 (max dev " + fmt("%.1e", d_iiou) + "); toy 7/12 " +
             (toy_iou ? "exact" : "WRONG") + ", toy iIoU 1/2 " + (toy_iiou ? "exact" : "WRONG") + "; " +
             fmt("%.1f s", secs);
  return o;
}

// 2. synthesize_haze then dehaze_analytic.
Outcome haze_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 1), tt(1e-3, 1);
  double worst = 0, min_t = 1;
  long clips = 0;
  for (int i = 0; i < 100; ++i) {
    const int h = 8 + static_cast<int>(rng() % 25), w = 8 + static_cast<int>(rng() % 25);
    const Image clean = testing::random_image(h, w, 3, rng);
    haze::TransmissionMap t{Raster<double>(h, w)};
    for (double& v : t.values.values()) {
      v = i % 10 == 0 ? 1e-3 : tt(rng);
      min_t = std::min(min_t, v);
    }
    haze::HazeParams p;
    p.beta = 0.1 + u(rng);
    p.airlight = {u(rng), u(rng), u(rng)};
    haze::SynthesisStats stats;
    const Image hazy = haze::synthesize_haze(clean, t, p, &stats);
    clips += stats.clipped;
    const Image back = haze::dehaze_analytic(hazy, t, p);
    for (std::size_t k = 0; k < back.size(); ++k) worst = std::max(worst, std::abs(back.values()[k] - clean.values()[k]));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && clips == 0 && secs < 10,
          "100 images, min t " + fmt("%.0e", min_t) + ", max abs error " + fmt("%.2e", worst) + ", clipped " +
              std::to_string(clips) + "; " + fmt("%.1f s", secs)};
}

// 3. Finite differences at 32-bit on the tiny profile, per objective.
Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::TinyLossFixture<float> f(7);
  bool ok = true;
  std::string detail;
  for (auto& [name, loss] : f.objectives()) {
    // h = 3e-3 with the derivative averaged over the step (32 nodes)
    const auto r = testing::check_generator_gradient(f.gen, loss, 24, 3e-3, 21, 32);
    ok = ok && r.sampled >= 20 && r.vector_relative_error < 1e-2;
    detail += name + " " + fmt("%.4f", r.vector_relative_error) + " (" + std::to_string(r.sampled) + "), ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 120, "relative error (entries): " + detail + fmt("%.0f s", secs)};
}

train::TrainConfig steps_config(Regime regime, long steps) {
  auto cfg = train::TrainConfig::defaults(regime, models::Profile::tiny);
  cfg.epochs = 1000;
  cfg.max_steps = steps;
  return cfg;
}

// 4. Frozen networks keep their parameters through 200 DFS steps.
Outcome freeze_contract(Bench& b) {
  auto& seg = b.segnet();
  const std::string seg_before = train::parameter_checksum(seg);
  const models::PerceptualExtractor<float> fresh(models::PerceptualExtractorSpec::for_profile(models::Profile::tiny));
  const auto r = train::train_dehazer(steps_config(Regime::dfs, 200), b.train(), b.val(), &seg);
  const auto& rec = r.record;
  const bool ok = rec.step_log.size() == 200 && train::parameter_checksum(seg) == seg_before &&
                  rec.frozen_before.at("segnet") == seg_before && rec.frozen_after.at("segnet") == seg_before &&
                  rec.frozen_before.at("perceptual") == train::parameter_checksum(fresh) &&
                  rec.frozen_after.at("perceptual") == rec.frozen_before.at("perceptual");
  return {ok, std::to_string(rec.step_log.size()) + " steps; segnet " + seg_before.substr(0, 12) + " -> " +
                  train::parameter_checksum(seg).substr(0, 12) + ", perceptual " +
                  rec.frozen_before.at("perceptual").substr(0, 12) + " -> " +
                  rec.frozen_after.at("perceptual").substr(0, 12)};
}

bool same(const losses::LossBreakdown& a, const losses::LossBreakdown& b) {
  return a.gan == b.gan && a.pixel == b.pixel && a.percep == b.percep && a.seg == b.seg && a.total == b.total;
}

// 5. dfs with lambda3 forced to zero reproduces the plain dehazing run.
Outcome lambda3_zero_recovery(Bench& b) {
  auto dfs_cfg = steps_config(Regime::dfs, 10);
  dfs_cfg.force_lambda3_zero = true;
  auto dehaze_cfg = steps_config(Regime::dehaze, 10);
  dehaze_cfg.batch_size = dfs_cfg.batch_size;
  const auto a = train::train_dehazer(dfs_cfg, b.train(), b.val(), &b.segnet());
  const auto d = train::train_dehazer(dehaze_cfg, b.train(), b.val(), &b.segnet());
  const auto& la = a.record.step_log;
  const auto& ld = d.record.step_log;
  bool equal = la.size() == 10 && ld.size() == 10;
  for (std::size_t i = 0; equal && i < la.size(); ++i) equal = same(la[i], ld[i]);
  const bool step0 = !la.empty() && !ld.empty() && same(la[0], ld[0]);
  return {equal && step0, "step-0 breakdown " + std::string(step0 ? "identical" : "DIFFERS") + " (total " +
                              fmt("%.6f", la.empty() ? NAN : la[0].total) + "), 10-step logs " +
                              (equal ? "identical" : "DIFFER")};
}

double moving_average(const std::vector<losses::LossBreakdown>& log, std::size_t from) {
  double s = 0;
  for (std::size_t i = from; i < from + 10; ++i) s += log[i].total;
  return s / 10;
}

double pooled_psnr(const std::vector<Image>& images, const std::vector<data::Scene>& scenes) {
  double m = 0;
  for (std::size_t i = 0; i < images.size(); ++i) m += metrics::mse(images[i], scenes[i].clean);
  return metrics::psnr_from_mse(m / images.size());
}

// 6. 200 generator steps on the 64-scene benchmark.
Outcome smoke_training(Bench& b) {
  b.ensure();
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = train::train_dehazer(steps_config(Regime::dehaze, 200), b.train(), b.val(), &b.segnet());
  const auto& log = r.record.step_log;
  if (log.size() < 20) return {false, "only " + std::to_string(log.size()) + " steps ran"};
  const double first = moving_average(log, 0), last = moving_average(log, log.size() - 10);
  const double reduction = 1 - last / first;
  std::vector<Image> hazy;
  for (const auto& s : b.test()) hazy.push_back(s.hazy);
  const double p_hazy = pooled_psnr(hazy, b.test());
  const double p_out = pooled_psnr(train::dehaze_all(*r.last, b.test()), b.test());
  const double secs = seconds_since(t0);
  return {log.size() == 200 && reduction >= 0.5 && p_out - p_hazy >= 2 && secs < 600,
          "smoothed loss " + fmt("%.3f", first) + " -> " + fmt("%.3f", last) + " (" + fmt("%.1f%%", 100 * reduction) +
              " lower); test PSNR " + fmt("%.2f", p_out) + " dB vs hazy " + fmt("%.2f", p_hazy) + " dB; " +
              fmt("%.0f s", secs)};
}

struct Directional {
  int lower = 0;
  double iiou_dfs = 0, iiou_dehaze = 0;
  bool holds() const { return lower >= 4 && iiou_dfs >= iiou_dehaze; }
  std::string text() const {
    return "DFS seg loss lower in " + std::to_string(lower) + "/5 runs; mean iIoU-cl DFS " + fmt("%.4f", iiou_dfs) +
           " vs Dehaze " + fmt("%.4f", iiou_dehaze);
  }
};

Directional run_protocol(Bench& b, const train::TrainConfig& cfg) {
  const auto r = train::five_run_protocol(cfg, b.train(), b.val(), b.test(), b.segnet(), b.evaluator(),
                                          metrics::Taxonomy::synthetic(), metrics::Palette::synthetic_v1(), 5,
                                          b.files().test.hash);
  Directional d;
  for (const auto& run : r.runs) d.lower += run.at(Arm::dfs).seg_loss < run.at(Arm::dehaze).seg_loss;
  d.iiou_dfs = r.mean.at(Arm::dfs).iiou_cl;
  d.iiou_dehaze = r.mean.at(Arm::dehaze).iiou_cl;
  return d;
}

// 7. Directional effect of the segmentation loss over five seeds. A failure
// reruns with the lambda3 picked by a validation grid search before it counts.
Outcome directional_effect(Bench& b) {
  b.ensure();
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = train::TrainConfig::defaults(Regime::dfs, models::Profile::tiny);
  const auto d = run_protocol(b, cfg);
  if (d.holds()) return {true, d.text() + " (lambda3 " + fmt("%g", cfg.weights.lambda3) + "); " + fmt("%.0f s", seconds_since(t0))};

  const auto grid = train::grid_search_lambda(cfg, {3}, train::default_lambda_grid(), b.train(), b.val(), &b.segnet());
  const auto retry = run_protocol(b, grid.winner);
  return {retry.holds(), "default lambda3: " + d.text() + "; grid-search lambda3 " +
                             fmt("%.3g", grid.winner.weights.lambda3) + ": " + retry.text() + "; " +
                             fmt("%.0f s", seconds_since(t0))};
}

// ---- 8: full-size profile through the command-line tool -------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + DFS_CLI_PATH + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Writes 2048x1024 street-like frames with 19-class labels: synthetic shapes
// relabelled as road / building / traffic sign / person / car.
void write_frames(const fs::path& dir, const std::string& prefix, int n, std::uint64_t seed) {
  data::SyntheticOptions opt;
  opt.height = 1024;
  opt.width = 2048;
  const auto bench = data::synthetic_benchmark(8, seed, n, opt);
  static const std::uint8_t kMap[] = {0, 13, 2, 11, 7};  // background, disc, square, triangle, diamond
  const auto tax = metrics::Taxonomy::cityscapes();
  for (const char* sub : {"clean", "depth", "labels", "instances"}) fs::create_directories(dir / sub);
  for (const auto& s : bench.segnet_train) {
    SegLabelMap labels = s.labels;
    InstanceMap inst = s.instances;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto& l = labels.values()[i];
      if (l != kIgnoreLabel) l = kMap[l];
      if (l == kIgnoreLabel || !tax.has_instances[l]) inst.values()[i] = 0;
    }
    const std::string file = prefix + "_" + s.id + ".png";
    io::write_png(dir / "clean" / file, s.clean, 8);
    io::write_depth(dir / "depth" / file, s.depth, 0, opt.depth_max);
    io::write_labels(dir / "labels" / file, labels);
    io::write_instances(dir / "instances" / file, inst);
  }
}

// VGG-16-shaped feature snapshot with He-initialized weights, standing in
// for pretrained ImageNet weights that are not shipped.
void write_vgg_snapshot(const fs::path& path) {
  nn::Checkpoint ckpt;
  ckpt.kind = "vgg16-features";
  std::mt19937_64 rng(16);
  int cin = 3;
  const auto stages = models::PerceptualExtractor<float>::architecture(true);
  for (std::size_t s = 0; s < stages.size(); ++s)
    for (std::size_t j = 0; j < stages[s].widths.size(); ++j) {
      const int cout = stages[s].widths[j];
      const std::string name = "conv" + std::to_string(s + 1) + "_" + std::to_string(j + 1);
      std::normal_distribution<double> nd(0, std::sqrt(2.0 / (cin * 9)));
      nn::StoredTensor w{name + ".weight", {cout, cin, 3, 3}, false, {}};
      w.values.resize(w.shape.numel());
      for (double& v : w.values) v = nd(rng);
      ckpt.tensors.push_back(std::move(w));
      ckpt.tensors.push_back({name + ".bias", {1, cout, 1, 1}, false, std::vector<double>(cout, 0.0)});
      cin = cout;
    }
  nn::write_checkpoint(path, ckpt);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

// Rows and columns of one emitted table, every cell a finite number.
std::string check_table(const fs::path& p, const std::vector<std::string>& rows) {
  const auto t = read_csv(p);
  const std::vector<std::string> header{"Metrics", "Hazy", "Dehaze", "DFS", "GT"};
  if (t.empty() || t[0] != header) return p.filename().string() + ": header differs";
  if (t.size() != rows.size() + 1) return p.filename().string() + ": " + std::to_string(t.size() - 1) + " rows";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (t[i + 1].size() != 5 || t[i + 1][0] != rows[i]) return p.filename().string() + ": row " + std::to_string(i + 1);
    for (int c = 1; c < 5; ++c) {
      char* end = nullptr;
      const double v = std::strtod(t[i + 1][c].c_str(), &end);
      if (t[i + 1][c].empty() || *end != '\0' || !std::isfinite(v))
        return p.filename().string() + ": cell " + rows[i] + "/" + header[c] + " = '" + t[i + 1][c] + "'";
    }
  }
  return "";
}

Outcome paper_profile_end_to_end(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = work / "fullsize";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path log = root / "cli.log";
  const struct {
    const char* split;
    int frames;
    std::uint64_t seed;
  } splits[] = {{"train", 2, 31}, {"val", 1, 32}, {"test", 1, 33}, {"segnet-train", 2, 34}};
  for (const auto& s : splits) {
    const fs::path src = root / "user" / s.split;
    write_frames(src, s.split, s.frames, s.seed);
    const std::string args = "synthesize --clean \"" + (src / "clean").string() + "\" --depth \"" +
                             (src / "depth").string() + "\" --labels \"" + (src / "labels").string() +
                             "\" --instances \"" + (src / "instances").string() + "\" --beta 0.6 --airlight 0.85 " +
                             "--taxonomy cityscapes --split " + s.split + " --name user-" + s.split + " --out \"" +
                             (root / "hazed" / s.split).string() + "\"";
    if (int rc = run_cli(args, log); rc != 0) return {false, "synthesize " + std::string(s.split) + " exited " + std::to_string(rc)};
  }
  write_vgg_snapshot(root / "vgg16.ckpt");

  const std::string manifests = "train_manifest=hazed/train/manifest.tsv\nval_manifest=hazed/val/manifest.tsv\n"
                                "test_manifest=hazed/test/manifest.tsv\nsegnet_manifest=hazed/segnet-train/manifest.tsv\n";
  std::ofstream(root / "segnet.cfg") << "version=1\nregime=segnet\nprofile=paper\n" << manifests
                                     << "epochs=1\nbatch_size=2\nmax_steps=1\noutput_dir=runs\n";
  std::string cmds[] = {"validate-manifest \"" + (root / "hazed/train/manifest.tsv").string() + "\" \"" +
                            (root / "hazed/val/manifest.tsv").string() + "\" \"" +
                            (root / "hazed/test/manifest.tsv").string() + "\" \"" +
                            (root / "hazed/segnet-train/manifest.tsv").string() + "\"",
                        "train-segnet --config \"" + (root / "segnet.cfg").string() + "\"",
                        "train-segnet --evaluator --config \"" + (root / "segnet.cfg").string() + "\""};
  for (const auto& c : cmds)
    if (int rc = run_cli(c, log); rc != 0) return {false, c.substr(0, c.find(' ')) + " exited " + std::to_string(rc)};

  std::ofstream(root / "dfs.cfg") << "version=1\nprofile=paper\nvgg_path=vgg16.ckpt\n" << manifests
                                  << "segnet_checkpoint=runs/segnet/segnet.ckpt\n"
                                  << "evaluator_checkpoint=runs/evaluator/segnet.ckpt\n"
                                  << "epochs=1\nbatch_size=1\nmax_steps=1\nruns=1\noutput_dir=runs\n";
  if (int rc = run_cli("five-run --config \"" + (root / "dfs.cfg").string() + "\"", log); rc != 0)
    return {false, "five-run exited " + std::to_string(rc) + " (see " + log.string() + ")"};
  if (int rc = run_cli("report \"" + (root / "runs/five-run").string() + "\" --out \"" + (root / "report").string() + "\"", log);
      rc != 0)
    return {false, "report exited " + std::to_string(rc)};

  // full-size networks were used
  const auto records = pipeline::collect_records({root / "runs/five-run"});
  bool full_size = records.size() == 2;
  for (const auto& r : records) {
    full_size = full_size && r.config.profile == models::Profile::paper;
    const auto ckpt = nn::read_checkpoint(r.checkpoints.at("generator_best"));
    full_size = full_size && ckpt.spec == models::GeneratorSpec::for_profile(models::Profile::paper).echo();
  }
  std::string schema;
  for (const auto& [file, rows] :
       std::vector<std::pair<std::string, std::vector<std::string>>>{{"segmap_quality.csv", {"PSNR", "SSIM"}},
                                                                     {"segmentation_iou.csv", {"IoU-cl", "iIoU-cl", "IoU-ca", "iIoU-ca"}},
                                                                     {"image_quality.csv", {"PSNR", "SSIM", "MSE", "seg loss"}}})
    if (schema.empty()) schema = check_table(root / "report" / file, rows);
  const bool plot = fs::exists(root / "report/loss_curves.svg");
  const double secs = seconds_since(t0);
  return {full_size && schema.empty() && plot,
          std::string(full_size ? "full-size generator/VGG-16 perceptual run completed" : "NOT the full-size networks") +
              " on 2048x1024 frames; tables " + (schema.empty() ? "Metrics x {Hazy, Dehaze, DFS, GT}, rows as published" : schema) +
              "; D-Hazy PSNR 17.89 / SSIM 0.744 and foggy-Cityscapes table values are not reproduced at desk scale; " +
              fmt("%.0f s", secs)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / ("dfs-acceptance-" + std::to_string(::getpid()))).string();
  bool keep = false;
  app.add_option("--only", only, "run only these criteria (1-8)")->check(CLI::Range(1, 8));
  app.add_option("--work", work, "scratch directory");
  app.add_flag("--keep", keep, "keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  Bench bench(fs::path(work) / "bench");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracle suite", metric_oracles},
      {"haze model round trip", haze_round_trip},
      {"gradient checks (32-bit, tiny profile)", gradient_checks},
      {"freeze contract (200 DFS steps)", [&] { return freeze_contract(bench); }},
      {"lambda3 = 0 recovers the dehazing objective", [&] { return lambda3_zero_recovery(bench); }},
      {"smoke training (200 steps)", [&] { return smoke_training(bench); }},
      {"directional DFS effect (five runs)", [&] { return directional_effect(bench); }},
      {"full-size profile end to end, report schema", [&] { return paper_profile_end_to_end(work); }}};
  const std::set<int> selected(only.begin(), only.end());
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail << std::endl;
  }
  if (!keep) fs::remove_all(work);
  return all ? 0 : 1;
}
