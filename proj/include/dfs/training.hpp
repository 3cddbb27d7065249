#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfs/dataset.hpp"
#include "dfs/losses.hpp"
#include "dfs/metrics.hpp"
#include "dfs/models.hpp"
#include "dfs/nn/checkpoint.hpp"

// Training regimes (SEG-NET pretraining, plain dehazing, segmentation-guided
// dehazing), the lambda grid search and the five-run evaluation protocol.
// Every network is trained in single precision.
namespace dfs::train {

enum class Regime { segnet, dehaze, dfs };
std::string to_string(Regime r);
Regime parse_regime(const std::string& s);

struct TrainConfig {
  Regime regime = Regime::dfs;
  models::Profile profile = models::Profile::tiny;
  int epochs = 0;
  int batch_size = 0;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  losses::LossWeights weights{10, 10, 5};
  std::uint64_t seed = 1;
  // Stop after this many optimizer steps (0 = no cap). The epoch in progress
  // is still evaluated.
  long max_steps = 0;
  // dfs regime with lambda3 = 0, the ablation that recovers the dehazing objective.
  bool force_lambda3_zero = false;
  std::string vgg_path;  // perceptual snapshot for the paper profile
  std::filesystem::path run_dir;  // empty: nothing is written

  static TrainConfig defaults(Regime regime, models::Profile profile);
  // Throws ConfigError on regime/weight mismatch or non-positive sizes.
  void validate() const;
  losses::LossWeights effective_weights() const;
  // key=value lines in a fixed order.
  std::string echo() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  int epoch = 0;
  long steps = 0;  // cumulative optimizer steps at the end of the epoch
  losses::LossBreakdown train;  // mean over the epoch's steps
  losses::LossBreakdown val;
  metrics::MetricsReport val_metrics;
  double val_score = 0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<losses::LossBreakdown> step_log;  // generator (or SEG-NET) loss per step
  std::vector<double> disc_log;                 // discriminator loss per step
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // index into epochs, -1 when no epoch ran
  double best_score = 0;
  std::map<std::string, std::string> checkpoints;
  std::map<std::string, std::string> frozen_before;  // network -> parameter checksum
  std::map<std::string, std::string> frozen_after;
  // Held-out evaluation, filled by the five-run protocol.
  std::string test_id;  // identity of the test set (manifest content hash)
  std::map<metrics::Arm, metrics::MetricsReport> test_reports;

  std::string to_json() const;
  static RunRecord from_json(const std::string& text);
};

// SHA-256 of the raw parameter bytes, hex encoded.
template <typename T>
std::string parameter_checksum(const nn::Module<T>& m);

// Adam over every trainable parameter of a module.
class Adam {
 public:
  Adam(const nn::Module<float>& module, double lr, double beta1, double beta2, double eps = 1e-8);
  void step();
  long steps() const { return t_; }

 private:
  std::vector<nn::Var<float>> params_;
  std::vector<std::vector<float>> m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

// Stacks scenes [begin, end) into a batch.
struct Batch {
  nn::Tensor<float> hazy, clean;
  std::vector<std::uint8_t> labels;
};
Batch make_batch(const std::vector<data::Scene>& scenes, const std::vector<std::size_t>& index);

// Seeded per-epoch order over n items.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

struct SegnetResult {
  RunRecord record;
  std::unique_ptr<models::SegNet<float>> net;
  double train_pixel_accuracy = 0;
};

// Pretrains a segmentation network on clean images with pixel-wise cross
// entropy. `disjoint_from` lists scene sets the training set must not share
// an id with; an overlap is a ValidationError (data leak).
SegnetResult train_segnet(const TrainConfig& cfg, const std::vector<data::Scene>& train,
                          const models::SegNetSpec& spec,
                          const std::vector<const std::vector<data::Scene>*>& disjoint_from = {});

double pixel_accuracy(const models::SegNet<float>& net, const std::vector<data::Scene>& scenes,
                      bool on_hazy = false);

struct DehazerResult {
  RunRecord record;
  std::unique_ptr<models::Generator<float>> best;  // weights of the best validation epoch
  std::unique_ptr<models::Generator<float>> last;
};

// Called after every generator step with the step index and its losses.
using StepHook = std::function<void(long, const losses::LossBreakdown&)>;

// Pix2pix schedule: one discriminator then one generator step per batch.
// The SEG-NET, when given, is frozen for the whole run; in the dehaze regime
// it only monitors the segmentation term. dfs regime without a SEG-NET is a
// ConfigError; a non-finite loss raises NumericError naming the last finite
// step.
DehazerResult train_dehazer(const TrainConfig& cfg, const std::vector<data::Scene>& train,
                            const std::vector<data::Scene>& val, const models::SegNet<float>* segnet,
                            const StepHook& hook = {});

// Generator outputs for every scene, in order.
std::vector<Image> dehaze_all(const models::Generator<float>& gen, const std::vector<data::Scene>& scenes,
                              int batch_size = 8);

// Mean SEG-NET segmentation loss on a set of images against the scene labels.
double mean_seg_loss(const models::SegNet<float>& segnet, const std::vector<Image>& images,
                     const std::vector<data::Scene>& scenes, int batch_size = 8);

// One arm of the evaluation table: `images` compared with the clean scenes.
// IoU / iIoU come from `evaluator`; the segmentation-map PSNR / SSIM and
// seg_loss come from `segnet`.
metrics::MetricsReport evaluate_arm(metrics::Arm arm, const std::vector<Image>& images,
                                    const std::vector<data::Scene>& scenes,
                                    const models::SegNet<float>& segnet,
                                    const models::SegNet<float>& evaluator, const metrics::Taxonomy& tax,
                                    const metrics::Palette& palette);

struct GridRow {
  double value = 0;  // candidate assigned to every selected weight
  losses::LossWeights weights;
  double val_score = 0;
};

struct GridResult {
  std::vector<GridRow> rows;  // best first
  TrainConfig winner;
};

// 10 log-spaced values from 1 to 50.
std::vector<double> default_lambda_grid();

// Trains one run per candidate and ranks by best validation score. `which`
// holds 1, 2 and/or 3. Ties keep candidate order.
GridResult grid_search_lambda(const TrainConfig& base, const std::vector<int>& which,
                              const std::vector<double>& candidates, const std::vector<data::Scene>& train,
                              const std::vector<data::Scene>& val, const models::SegNet<float>* segnet);

struct ProtocolResult {
  std::vector<std::uint64_t> seeds;
  std::vector<std::map<metrics::Arm, metrics::MetricsReport>> runs;
  std::map<metrics::Arm, metrics::MetricsReport> mean;
  std::map<metrics::Arm, metrics::MetricsReport> stddev;  // population standard deviation
  std::vector<RunRecord> dehaze_records, dfs_records;
};

std::vector<std::uint64_t> protocol_seeds(std::uint64_t seed, int runs = 5);

// For each derived seed trains a lambda3 = 0 (Dehaze) and a dfs (DFS) generator
// from the same initialization and evaluates the best-validation checkpoints
// on `test` next to the Hazy and GT arms. The dfs records carry the Hazy, DFS
// and GT reports, the dehaze records the Dehaze report. An empty `test_id`
// is replaced by scene_set_hash(test).
ProtocolResult five_run_protocol(const TrainConfig& dfs_cfg, const std::vector<data::Scene>& train,
                                 const std::vector<data::Scene>& val, const std::vector<data::Scene>& test,
                                 const models::SegNet<float>& segnet, const models::SegNet<float>& evaluator,
                                 const metrics::Taxonomy& tax, const metrics::Palette& palette, int runs = 5,
                                 const std::string& test_id = "");

// SHA-256 over scene ids and raster contents.
std::string scene_set_hash(const std::vector<data::Scene>& scenes);

}  // namespace dfs::train
