#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dfs/manifest.hpp"
#include "dfs/report.hpp"
#include "dfs/training.hpp"

// Experiment configuration files and the operations behind each CLI command.
namespace dfs::pipeline {

inline constexpr int kConfigVersion = 1;

// Flat key=value file. '#' starts a comment. Relative paths resolve against
// the file's directory.
//
//   version            must equal kConfigVersion (required)
//   train_manifest, val_manifest, test_manifest, segnet_manifest
//   output_dir         default: "runs" next to the config file
//   regime             segnet | dehaze | dfs (must agree with the command)
//   profile            tiny | paper
//   epochs, batch_size, lr, beta1, beta2, lambda1, lambda2, lambda3
//   seed, max_steps, force_lambda3_zero, vgg_path
//   segnet_checkpoint, evaluator_checkpoint
//   preprocess         cityscapes | dhazy
//   runs               five-run protocol size, default 5
//   grid_weights       comma list of 1, 2, 3; default 3
//   grid_values        "default" or comma list
//   metrics            comma list of report columns echoed to the console
struct ExperimentConfig {
  int version = kConfigVersion;
  std::filesystem::path source;
  std::filesystem::path train_manifest, val_manifest, test_manifest, segnet_manifest;
  std::filesystem::path output_dir;
  std::filesystem::path segnet_checkpoint, evaluator_checkpoint;
  train::TrainConfig train;
  data::PreprocessPath preprocess = data::PreprocessPath::cityscapes;
  int runs = 5;
  std::vector<int> grid_weights{3};
  std::vector<double> grid_values;
  std::vector<std::string> metrics;
};

// Values from the command line that take precedence over the file.
struct Overrides {
  std::optional<train::Regime> regime;
  std::optional<std::uint64_t> seed;
  std::optional<models::Profile> profile;
};

// Unknown or repeated keys, bad values, a version mismatch and missing
// referenced files are ConfigErrors naming the line.
ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base_dir,
                                  const Overrides& overrides = {});
ExperimentConfig load_experiment(const std::filesystem::path& path, const Overrides& overrides = {});

// Reads a manifest and returns network-ready scenes for `profile`.
std::vector<data::Scene> load_split(const std::filesystem::path& manifest, models::Profile profile,
                                    data::PreprocessPath path);

// Rebuilds a frozen segmentation network from a checkpoint.
std::unique_ptr<models::SegNet<float>> load_segnet(const std::filesystem::path& checkpoint);

// Taxonomy shared by the configured manifests; disagreement is a ConfigError.
std::string experiment_taxonomy(const ExperimentConfig& cfg);

// Each command writes under cfg.output_dir and prints a short summary to `log`.
train::SegnetResult run_train_segnet(const ExperimentConfig& cfg, bool evaluator, std::ostream& log);
train::DehazerResult run_train_dehaze(const ExperimentConfig& cfg, std::ostream& log);
train::GridResult run_grid_search(const ExperimentConfig& cfg, std::ostream& log);
train::ProtocolResult run_five_run(const ExperimentConfig& cfg, std::ostream& log);

// Collects record.json files below each path (files are taken as is).
std::vector<train::RunRecord> collect_records(const std::vector<std::filesystem::path>& paths);

struct EvaluateOptions {
  std::filesystem::path pred_dir, gt_dir, instances_dir, report;
  std::string taxonomy = "synthetic";
};

// Label-map evaluation. `pred_dir` holds one subdirectory per arm (Hazy,
// Dehaze, DFS, GT, case-insensitive) or label PNGs directly; every prediction
// is paired with the same-named file in `gt_dir`. Writes one row per arm and
// an "all" row pooling every arm.
std::vector<std::pair<std::string, metrics::MetricsReport>> run_evaluate(const EvaluateOptions& opt,
                                                                         std::ostream& log);

}  // namespace dfs::pipeline
