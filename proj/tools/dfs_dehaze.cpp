// dfs-dehaze: command-line front end.
//
// Exit codes: 0 success, 1 invalid input (bad flags, config, manifest or
// data), 2 runtime failure (numeric blow-up, I/O while writing, ...).

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "dfs/error.hpp"
#include "dfs/manifest.hpp"
#include "dfs/pipeline.hpp"
#include "dfs/report.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dfs;

constexpr int kOk = 0, kInvalid = 1, kRuntime = 2;

struct TrainFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string profile;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file (key=value)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "root seed, overrides the config");
  cmd->add_option("--profile", f.profile, "model profile, overrides the config")
      ->check(CLI::IsMember({"tiny", "paper"}));
}

pipeline::ExperimentConfig load(const TrainFlags& f, std::optional<train::Regime> regime) {
  pipeline::Overrides ov;
  ov.regime = regime;
  ov.seed = f.seed;
  if (!f.profile.empty()) ov.profile = models::parse_profile(f.profile);
  return pipeline::load_experiment(f.config, ov);
}

std::array<double, 3> parse_airlight(const std::string& s) {
  std::array<double, 3> a{};
  std::vector<double> v;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("bad airlight value '" + item + "'");
    }
  }
  if (v.size() == 1) a.fill(v[0]);
  else if (v.size() == 3) std::copy(v.begin(), v.end(), a.begin());
  else throw ValidationError("--airlight takes one value or r,g,b");
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation-guided single-image dehazing: data, training and evaluation", "dfs-dehaze"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  // synthesize
  manifest::SynthesizeOptions syn;
  std::string syn_airlight = "0.8", syn_split = "test";
  auto* c_syn = app.add_subcommand("synthesize", "haze clean images with their depth maps");
  c_syn->add_option("--clean", syn.clean_dir, "directory of 8-bit RGB PNGs")->required();
  c_syn->add_option("--depth", syn.depth_dir, "directory of 16-bit depth PNGs (same file names)")->required();
  c_syn->add_option("--out", syn.out_dir, "output directory (hazy/ and manifest.tsv)")->required();
  c_syn->add_option("--beta", syn.params.beta, "attenuation coefficient, > 0")->required();
  c_syn->add_option("--airlight", syn_airlight, "airlight, one value or r,g,b in [0,1]")->required();
  c_syn->add_option("--labels", syn.labels_dir, "optional directory of 8-bit label PNGs");
  c_syn->add_option("--instances", syn.instances_dir, "optional directory of 16-bit instance PNGs");
  c_syn->add_option("--depth-min", syn.depth_min, "depth of code 0")->capture_default_str();
  c_syn->add_option("--depth-max", syn.depth_max, "depth of code 65535")->capture_default_str();
  c_syn->add_option("--split", syn_split, "manifest split")
      ->check(CLI::IsMember({"train", "val", "test", "segnet-train"}))
      ->capture_default_str();
  c_syn->add_option("--name", syn.name, "manifest name")->capture_default_str();
  c_syn->add_option("--taxonomy", syn.taxonomy, "label taxonomy")
      ->check(CLI::IsMember({"synthetic", "cityscapes"}))
      ->capture_default_str();
  c_syn->add_flag("--force", syn.force, "overwrite files in a non-empty output directory");

  // build-benchmark
  fs::path bb_out;
  int bb_n = 64, bb_segnet = 64, bb_size = 32;
  std::uint64_t bb_seed = 7;
  bool bb_force = false;
  auto* c_bb = app.add_subcommand("build-benchmark", "write the procedural shapes benchmark with manifests");
  c_bb->add_option("--out", bb_out, "output directory")->required();
  c_bb->add_option("--scenes", bb_n, "scenes split into train/val/test (>= 8)")->capture_default_str();
  c_bb->add_option("--segnet-scenes", bb_segnet, "extra scenes for segmentation pretraining")->capture_default_str();
  c_bb->add_option("--seed", bb_seed, "generator seed")->capture_default_str();
  c_bb->add_option("--size", bb_size, "square image side in pixels")->capture_default_str();
  c_bb->add_flag("--force", bb_force, "overwrite files in a non-empty output directory");

  // validate-manifest
  std::vector<fs::path> vm_paths;
  auto* c_vm = app.add_subcommand("validate-manifest", "check manifests; split disjointness is checked across all given");
  c_vm->add_option("manifests", vm_paths, "manifest files")->required();

  // training commands
  TrainFlags ts, td, tg, tf;
  bool ts_eval = false, td_dfs = false;
  auto* c_ts = app.add_subcommand("train-segnet", "pretrain the segmentation network on clean images");
  add_train_flags(c_ts, ts);
  c_ts->add_flag("--evaluator", ts_eval, "train the wider held-out evaluator instead");
  auto* c_td = app.add_subcommand("train-dehaze", "train a dehazing generator");
  add_train_flags(c_td, td);
  c_td->add_flag("--dfs", td_dfs, "add the segmentation loss (needs segnet_checkpoint)");
  auto* c_gs = app.add_subcommand("grid-search", "rank loss-weight candidates on the validation split");
  add_train_flags(c_gs, tg);
  auto* c_fr = app.add_subcommand("five-run", "Dehaze vs DFS over derived seeds, evaluated on the test split");
  add_train_flags(c_fr, tf);

  // evaluate
  pipeline::EvaluateOptions ev;
  auto* c_ev = app.add_subcommand("evaluate", "score predicted label maps against ground truth");
  c_ev->add_option("--pred", ev.pred_dir, "prediction PNGs, flat or one subdirectory per arm")->required();
  c_ev->add_option("--gt", ev.gt_dir, "ground-truth label PNGs")->required();
  c_ev->add_option("--instances", ev.instances_dir, "instance PNGs for iIoU");
  c_ev->add_option("--report", ev.report, "metrics CSV to write");
  c_ev->add_option("--taxonomy", ev.taxonomy, "label taxonomy")
      ->check(CLI::IsMember({"synthetic", "cityscapes"}))
      ->capture_default_str();

  // report
  std::vector<fs::path> rp_in;
  fs::path rp_out;
  auto* c_rp = app.add_subcommand("report", "tables and loss plots from run records");
  c_rp->add_option("records", rp_in, "record.json files or directories searched recursively")->required();
  c_rp->add_option("--out", rp_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*c_syn) {
      syn.params.airlight = parse_airlight(syn_airlight);
      syn.split = manifest::parse_split(syn_split);
      const auto m = manifest::synthesize_directory(syn);
      std::cout << "wrote " << m.records.size() << " hazy images, manifest " << m.source.string() << "\n";
    } else if (*c_bb) {
      data::SyntheticOptions opt;
      opt.height = opt.width = bb_size;
      const auto b = manifest::build_synthetic_benchmark(bb_out, bb_n, bb_seed, bb_segnet, bb_force, opt);
      std::cout << "train " << b.train.records.size() << ", val " << b.val.records.size() << ", test "
                << b.test.records.size() << ", segnet-train " << b.segnet_train.records.size() << " scenes under "
                << bb_out.string() << "\n";
    } else if (*c_vm) {
      std::vector<manifest::DatasetManifest> ms;
      std::size_t records = 0;
      for (const auto& p : vm_paths) {
        ms.push_back(manifest::read_manifest(p));
        records += ms.back().records.size();
      }
      const auto vs = manifest::validate_manifests(ms);
      for (const auto& v : vs) std::cout << manifest::format_violation(v) << "\n";
      if (!vs.empty()) {
        std::cerr << vs.size() << " violation(s)\n";
        return kInvalid;
      }
      std::cout << "OK: " << ms.size() << " manifest(s), " << records << " records\n";
    } else if (*c_ts) {
      pipeline::run_train_segnet(load(ts, train::Regime::segnet), ts_eval, std::cout);
    } else if (*c_td) {
      pipeline::run_train_dehaze(load(td, td_dfs ? train::Regime::dfs : train::Regime::dehaze), std::cout);
    } else if (*c_gs) {
      pipeline::run_grid_search(load(tg, std::nullopt), std::cout);
    } else if (*c_fr) {
      pipeline::run_five_run(load(tf, train::Regime::dfs), std::cout);
    } else if (*c_ev) {
      pipeline::run_evaluate(ev, std::cout);
    } else if (*c_rp) {
      const auto files = report::report_tables(pipeline::collect_records(rp_in), rp_out);
      std::ifstream text(files.text);
      std::cout << text.rdbuf() << "\nwritten to " << rp_out.string() << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInvalid;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
