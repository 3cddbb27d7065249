#include "dfs/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dfs/error.hpp"
#include "dfs/io.hpp"
#include "dfs/seed.hpp"

namespace dfs::pipeline {
namespace {

namespace fs = std::filesystem;
using train::Regime;

constexpr std::uint64_t kEvaluatorStream = 50;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> comma_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
};

[[noreturn]] void bad(const Entry& e, const std::string& key, const std::string& why) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + key + ": " + why);
}

double to_double(const Entry& e, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size() || !std::isfinite(v)) throw std::invalid_argument(e.value);
    return v;
  } catch (const std::exception&) {
    bad(e, key, "expected a number, got '" + e.value + "'");
  }
}

long long to_int(const Entry& e, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument(e.value);
    return v;
  } catch (const std::exception&) {
    bad(e, key, "expected an integer, got '" + e.value + "'");
  }
}

bool to_bool(const Entry& e, const std::string& key) {
  if (e.value == "1" || e.value == "true") return true;
  if (e.value == "0" || e.value == "false") return false;
  bad(e, key, "expected true/false, got '" + e.value + "'");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

std::vector<manifest::DatasetManifest> configured_manifests(const ExperimentConfig& cfg) {
  std::vector<manifest::DatasetManifest> ms;
  for (const fs::path* p : {&cfg.train_manifest, &cfg.val_manifest, &cfg.test_manifest, &cfg.segnet_manifest})
    if (!p->empty()) ms.push_back(manifest::read_manifest(*p));
  return ms;
}

// Every training command refuses to start on a broken or leaking dataset.
void require_valid(const ExperimentConfig& cfg) {
  const auto violations = manifest::validate_manifests(configured_manifests(cfg));
  if (violations.empty()) return;
  std::string msg = std::to_string(violations.size()) + " manifest violation(s):";
  for (std::size_t i = 0; i < std::min<std::size_t>(violations.size(), 10); ++i)
    msg += "\n  " + manifest::format_violation(violations[i]);
  throw ValidationError(msg);
}

void require(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string(key) + " is not set in the experiment config");
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void print_report(std::ostream& log, const std::string& scope, const metrics::MetricsReport& r,
                  const std::vector<std::string>& keys) {
  const std::map<std::string, double> v{{"psnr", r.psnr},         {"ssim", r.ssim},       {"mse", r.mse},
                                        {"iou_cl", r.iou_cl},     {"iiou_cl", r.iiou_cl}, {"iou_ca", r.iou_ca},
                                        {"iiou_ca", r.iiou_ca},   {"seg_psnr", r.seg_psnr}, {"seg_ssim", r.seg_ssim},
                                        {"seg_loss", r.seg_loss}};
  log << scope << ":";
  for (const auto& k : keys) log << " " << k << "=" << v.at(k);
  log << "\n";
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& text, const fs::path& base_dir, const Overrides& ov) {
  static const std::set<std::string> kKeys{
      "version",   "train_manifest", "val_manifest", "test_manifest",     "segnet_manifest",   "output_dir",
      "regime",    "profile",        "epochs",       "batch_size",        "lr",                "beta1",
      "beta2",     "lambda1",        "lambda2",      "lambda3",           "seed",              "max_steps",
      "force_lambda3_zero",          "vgg_path",     "segnet_checkpoint", "evaluator_checkpoint",
      "preprocess", "runs",          "grid_weights", "grid_values",       "metrics"};
  static const std::set<std::string> kMetricNames{"psnr",    "ssim",    "mse",      "iou_cl",   "iiou_cl",
                                                  "iou_ca",  "iiou_ca", "seg_psnr", "seg_ssim", "seg_loss"};
  std::map<std::string, Entry> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (!kKeys.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (kv.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' repeated");
    kv[key] = {trim(line.substr(eq + 1)), lineno};
  }

  ExperimentConfig c;
  auto has = [&](const char* k) { return kv.count(k) > 0; };
  if (!has("version")) throw ConfigError("missing required key 'version'");
  c.version = static_cast<int>(to_int(kv["version"], "version"));
  if (c.version != kConfigVersion)
    bad(kv["version"], "version", "config version " + std::to_string(c.version) + " does not match tool version " +
                                      std::to_string(kConfigVersion));

  auto path_of = [&](const char* k) -> fs::path {
    if (!has(k)) return {};
    const fs::path p = kv[k].value;
    const fs::path full = p.is_absolute() ? p : base_dir / p;
    if (!fs::exists(full)) bad(kv[k], k, "file not found: " + full.string());
    return full;
  };
  c.train_manifest = path_of("train_manifest");
  c.val_manifest = path_of("val_manifest");
  c.test_manifest = path_of("test_manifest");
  c.segnet_manifest = path_of("segnet_manifest");
  c.segnet_checkpoint = path_of("segnet_checkpoint");
  c.evaluator_checkpoint = path_of("evaluator_checkpoint");
  const fs::path vgg = path_of("vgg_path");
  if (has("output_dir")) {
    const fs::path p = kv["output_dir"].value;
    c.output_dir = p.is_absolute() ? p : base_dir / p;
  } else {
    c.output_dir = base_dir / "runs";
  }

  Regime regime = Regime::dfs;
  if (has("regime")) {
    try {
      regime = train::parse_regime(kv["regime"].value);
    } catch (const ConfigError& e) {
      bad(kv["regime"], "regime", e.what());
    }
    if (ov.regime && *ov.regime != regime)
      bad(kv["regime"], "regime", "config says " + kv["regime"].value + " but the command runs " + train::to_string(*ov.regime));
  }
  if (ov.regime) regime = *ov.regime;
  models::Profile profile = models::Profile::tiny;
  if (has("profile")) {
    try {
      profile = models::parse_profile(kv["profile"].value);
    } catch (const Error& e) {
      bad(kv["profile"], "profile", e.what());
    }
  }
  if (ov.profile) profile = *ov.profile;

  train::TrainConfig& t = c.train;
  t = train::TrainConfig::defaults(regime, profile);
  if (has("epochs")) t.epochs = static_cast<int>(to_int(kv["epochs"], "epochs"));
  if (has("batch_size")) t.batch_size = static_cast<int>(to_int(kv["batch_size"], "batch_size"));
  if (has("lr")) t.lr = to_double(kv["lr"], "lr");
  if (has("beta1")) t.beta1 = to_double(kv["beta1"], "beta1");
  if (has("beta2")) t.beta2 = to_double(kv["beta2"], "beta2");
  if (has("lambda1")) t.weights.lambda1 = to_double(kv["lambda1"], "lambda1");
  if (has("lambda2")) t.weights.lambda2 = to_double(kv["lambda2"], "lambda2");
  if (has("lambda3")) t.weights.lambda3 = to_double(kv["lambda3"], "lambda3");
  if (has("seed")) {
    const auto s = to_int(kv["seed"], "seed");
    if (s < 0) bad(kv["seed"], "seed", "must be >= 0");
    t.seed = static_cast<std::uint64_t>(s);
  }
  if (ov.seed) t.seed = *ov.seed;
  if (has("max_steps")) t.max_steps = to_int(kv["max_steps"], "max_steps");
  if (has("force_lambda3_zero")) t.force_lambda3_zero = to_bool(kv["force_lambda3_zero"], "force_lambda3_zero");
  t.vgg_path = vgg.string();
  if (profile == models::Profile::paper && regime != Regime::segnet && t.vgg_path.empty())
    throw ConfigError("paper profile needs vgg_path (VGG-16 feature snapshot)");
  t.validate();

  if (has("preprocess")) {
    const auto& v = kv["preprocess"].value;
    if (v == "cityscapes") c.preprocess = data::PreprocessPath::cityscapes;
    else if (v == "dhazy") c.preprocess = data::PreprocessPath::dhazy;
    else bad(kv["preprocess"], "preprocess", "expected cityscapes or dhazy, got '" + v + "'");
  }
  if (has("runs")) {
    c.runs = static_cast<int>(to_int(kv["runs"], "runs"));
    if (c.runs < 1) bad(kv["runs"], "runs", "must be >= 1");
  }
  if (has("grid_weights")) {
    c.grid_weights.clear();
    for (const auto& w : comma_list(kv["grid_weights"].value)) {
      if (w != "1" && w != "2" && w != "3") bad(kv["grid_weights"], "grid_weights", "entries must be 1, 2 or 3");
      c.grid_weights.push_back(w[0] - '0');
    }
    if (c.grid_weights.empty()) bad(kv["grid_weights"], "grid_weights", "empty list");
  }
  if (has("grid_values") && kv["grid_values"].value != "default") {
    for (const auto& v : comma_list(kv["grid_values"].value)) {
      const double x = to_double({v, kv["grid_values"].line}, "grid_values");
      if (!(x >= 0)) bad(kv["grid_values"], "grid_values", "values must be >= 0");
      c.grid_values.push_back(x);
    }
    if (c.grid_values.empty()) bad(kv["grid_values"], "grid_values", "empty list");
  }
  if (c.grid_values.empty()) c.grid_values = train::default_lambda_grid();
  if (has("metrics")) {
    for (const auto& m : comma_list(kv["metrics"].value)) {
      if (!kMetricNames.count(m)) bad(kv["metrics"], "metrics", "unknown metric '" + m + "'");
      c.metrics.push_back(m);
    }
  } else {
    c.metrics = {"psnr", "ssim", "iou_cl", "iiou_cl", "seg_loss"};
  }
  return c;
}

ExperimentConfig load_experiment(const fs::path& path, const Overrides& ov) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  try {
    ExperimentConfig c = parse_experiment(text, path.parent_path(), ov);
    c.source = path;
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<data::Scene> load_split(const fs::path& manifest_path, models::Profile profile, data::PreprocessPath path) {
  const auto m = manifest::read_manifest(manifest_path);
  return data::preprocess_all(manifest::load_scenes(m), profile, path);
}

std::unique_ptr<models::SegNet<float>> load_segnet(const fs::path& checkpoint) {
  const nn::Checkpoint ckpt = nn::read_checkpoint(checkpoint);
  if (ckpt.kind != "segnet") throw LoadError(checkpoint.string() + " holds a '" + ckpt.kind + "', expected segnet");
  auto net = std::make_unique<models::SegNet<float>>(models::SegNetSpec::from_echo(ckpt.spec), 0);
  nn::assign_checkpoint(ckpt, *net);
  net->set_trainable(false);
  return net;
}

std::string experiment_taxonomy(const ExperimentConfig& cfg) {
  std::string tax;
  for (const auto& m : configured_manifests(cfg)) {
    if (tax.empty()) tax = m.taxonomy;
    if (m.taxonomy != tax) throw ConfigError("manifests disagree on taxonomy: " + tax + " vs " + m.taxonomy);
  }
  return tax.empty() ? "synthetic" : tax;
}

train::SegnetResult run_train_segnet(const ExperimentConfig& cfg, bool evaluator, std::ostream& log) {
  require(cfg.segnet_manifest, "segnet_manifest");
  require_valid(cfg);
  const auto profile = cfg.train.profile;
  const auto scenes = load_split(cfg.segnet_manifest, profile, cfg.preprocess);
  std::vector<std::vector<data::Scene>> others;
  for (const fs::path* p : {&cfg.train_manifest, &cfg.val_manifest, &cfg.test_manifest})
    if (!p->empty()) others.push_back(load_split(*p, profile, cfg.preprocess));
  std::vector<const std::vector<data::Scene>*> disjoint;
  for (const auto& o : others) disjoint.push_back(&o);

  models::SegNetSpec spec =
      evaluator ? models::SegNetSpec::evaluator_for_profile(profile) : models::SegNetSpec::for_profile(profile);
  spec.n_classes = metrics::taxonomy_by_name(experiment_taxonomy(cfg)).n_classes();
  train::TrainConfig t = cfg.train;
  if (evaluator) t.seed = derive_seed(t.seed, kEvaluatorStream) >> 16;
  t.run_dir = cfg.output_dir / (evaluator ? "evaluator" : "segnet");
  auto res = train::train_segnet(t, scenes, spec, disjoint);
  log << (evaluator ? "evaluator" : "segnet") << ": " << res.record.step_log.size() << " steps, best epoch "
      << res.record.best_epoch << ", train pixel accuracy " << res.train_pixel_accuracy << "\n"
      << "checkpoint " << res.record.checkpoints.at("segnet") << "\n";
  return res;
}

train::DehazerResult run_train_dehaze(const ExperimentConfig& cfg, std::ostream& log) {
  require(cfg.train_manifest, "train_manifest");
  require(cfg.val_manifest, "val_manifest");
  require_valid(cfg);
  std::unique_ptr<models::SegNet<float>> segnet;
  if (cfg.train.regime == Regime::dfs) require(cfg.segnet_checkpoint, "segnet_checkpoint");
  if (!cfg.segnet_checkpoint.empty()) segnet = load_segnet(cfg.segnet_checkpoint);
  const auto train_set = load_split(cfg.train_manifest, cfg.train.profile, cfg.preprocess);
  const auto val_set = load_split(cfg.val_manifest, cfg.train.profile, cfg.preprocess);
  train::TrainConfig t = cfg.train;
  t.run_dir = cfg.output_dir / (train::to_string(t.regime) + "-seed" + std::to_string(t.seed));
  auto res = train::train_dehazer(t, train_set, val_set, segnet.get(), [&](long step, const losses::LossBreakdown& b) {
    if (step % 50 == 0) log << "step " << step << " total " << b.total << "\n";
  });
  const auto& rec = res.record;
  if (rec.best_epoch >= 0) {
    const auto& e = rec.epochs[rec.best_epoch];
    log << "best epoch " << rec.best_epoch << ": val PSNR " << e.val_metrics.psnr << " SSIM " << e.val_metrics.ssim
        << " seg loss " << e.val.seg << "\n";
  }
  log << "run directory " << t.run_dir.string() << "\n";
  return res;
}

train::GridResult run_grid_search(const ExperimentConfig& cfg, std::ostream& log) {
  require(cfg.train_manifest, "train_manifest");
  require(cfg.val_manifest, "val_manifest");
  require_valid(cfg);
  std::unique_ptr<models::SegNet<float>> segnet;
  if (cfg.train.regime == Regime::dfs) require(cfg.segnet_checkpoint, "segnet_checkpoint");
  if (!cfg.segnet_checkpoint.empty()) segnet = load_segnet(cfg.segnet_checkpoint);
  const auto train_set = load_split(cfg.train_manifest, cfg.train.profile, cfg.preprocess);
  const auto val_set = load_split(cfg.val_manifest, cfg.train.profile, cfg.preprocess);
  train::TrainConfig base = cfg.train;
  base.run_dir = cfg.output_dir / "grid";
  auto res = train::grid_search_lambda(base, cfg.grid_weights, cfg.grid_values, train_set, val_set, segnet.get());
  std::ostringstream csv;
  csv.precision(10);
  csv << "value,lambda1,lambda2,lambda3,val_score\n";
  for (const auto& r : res.rows)
    csv << r.value << "," << r.weights.lambda1 << "," << r.weights.lambda2 << "," << r.weights.lambda3 << ","
        << r.val_score << "\n";
  write_text(base.run_dir / "grid.csv", csv.str());
  write_text(base.run_dir / "winner.txt", res.winner.echo());
  log << "winner: lambda1=" << res.winner.weights.lambda1 << " lambda2=" << res.winner.weights.lambda2
      << " lambda3=" << res.winner.weights.lambda3 << " (val score " << res.rows.front().val_score << ")\n"
      << "results " << (base.run_dir / "grid.csv").string() << "\n";
  return res;
}

train::ProtocolResult run_five_run(const ExperimentConfig& cfg, std::ostream& log) {
  require(cfg.train_manifest, "train_manifest");
  require(cfg.val_manifest, "val_manifest");
  require(cfg.test_manifest, "test_manifest");
  require(cfg.segnet_checkpoint, "segnet_checkpoint");
  require(cfg.evaluator_checkpoint, "evaluator_checkpoint");
  if (cfg.train.regime != Regime::dfs) throw ConfigError("five-run takes a dfs configuration");
  require_valid(cfg);
  const auto segnet = load_segnet(cfg.segnet_checkpoint);
  const auto evaluator = load_segnet(cfg.evaluator_checkpoint);
  const auto p = cfg.train.profile;
  const auto train_set = load_split(cfg.train_manifest, p, cfg.preprocess);
  const auto val_set = load_split(cfg.val_manifest, p, cfg.preprocess);
  const auto test_set = load_split(cfg.test_manifest, p, cfg.preprocess);
  const std::string tax_name = experiment_taxonomy(cfg);
  const std::string test_id = manifest::read_manifest(cfg.test_manifest).hash;

  train::TrainConfig t = cfg.train;
  t.run_dir = cfg.output_dir / "five-run";
  auto res = train::five_run_protocol(t, train_set, val_set, test_set, *segnet, *evaluator,
                                      metrics::taxonomy_by_name(tax_name), metrics::palette_for_taxonomy(tax_name),
                                      cfg.runs, test_id);
  std::vector<train::RunRecord> all = res.dehaze_records;
  all.insert(all.end(), res.dfs_records.begin(), res.dfs_records.end());
  const auto files = report::report_tables(all, t.run_dir / "report");

  int lower_seg = 0;
  for (const auto& run : res.runs)
    lower_seg += run.at(metrics::Arm::dfs).seg_loss < run.at(metrics::Arm::dehaze).seg_loss;
  for (metrics::Arm a : metrics::kArms) print_report(log, metrics::to_string(a), res.mean.at(a), cfg.metrics);
  log << "DFS seg loss below Dehaze in " << lower_seg << " of " << res.runs.size() << " runs\n"
      << "tables " << files.text.string() << "\n";
  return res;
}

std::vector<train::RunRecord> collect_records(const std::vector<fs::path>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().filename() == "record.json") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      throw ValidationError("no such run record or directory: " + p.string());
    }
  }
  std::vector<train::RunRecord> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    try {
      out.push_back(train::RunRecord::from_json(text));
    } catch (const LoadError& e) {
      throw LoadError(f.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::pair<std::string, metrics::MetricsReport>> run_evaluate(const EvaluateOptions& opt, std::ostream& log) {
  if (!fs::is_directory(opt.pred_dir)) throw ValidationError("prediction directory " + opt.pred_dir.string() + " not found");
  if (!fs::is_directory(opt.gt_dir)) throw ValidationError("ground-truth directory " + opt.gt_dir.string() + " not found");
  const metrics::Taxonomy tax = metrics::taxonomy_by_name(opt.taxonomy);
  const metrics::Palette palette = metrics::palette_for_taxonomy(opt.taxonomy);

  std::vector<std::pair<metrics::Arm, fs::path>> arms;
  for (metrics::Arm a : metrics::kArms)
    for (const auto& e : fs::directory_iterator(opt.pred_dir))
      if (e.is_directory() && lower(e.path().filename().string()) == lower(metrics::to_string(a))) arms.emplace_back(a, e.path());
  const bool flat = arms.empty();
  if (flat) arms.emplace_back(metrics::Arm::dfs, opt.pred_dir);

  // every GT file, for corpus-level instance sizes
  std::vector<fs::path> gt_files;
  for (const auto& e : fs::directory_iterator(opt.gt_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") gt_files.push_back(e.path());
  std::sort(gt_files.begin(), gt_files.end());
  if (gt_files.empty()) throw ValidationError("no PNG label maps in " + opt.gt_dir.string());
  std::map<std::string, SegLabelMap> gts;
  std::map<std::string, InstanceMap> insts;
  for (const auto& f : gt_files) {
    gts[f.filename().string()] = io::read_labels(f);
    if (!opt.instances_dir.empty()) {
      const auto ip = opt.instances_dir / f.filename();
      if (!fs::is_regular_file(ip)) throw ValidationError("INSTANCES_MISSING: " + ip.string());
      insts[f.filename().string()] = io::read_instances(ip);
    }
  }
  metrics::InstanceSizeTable sizes;
  if (!insts.empty()) {
    std::vector<SegLabelMap> g;
    std::vector<InstanceMap> in;
    for (const auto& [name, m] : gts) {
      g.push_back(m);
      in.push_back(insts.at(name));
    }
    sizes = metrics::instance_sizes(g, in, tax);
  }

  auto finish = [&](metrics::ReportAccumulator& acc) {
    auto r = acc.report();
    r.psnr = r.ssim = r.mse = r.seg_loss = std::nan("");
    if (insts.empty()) r.iiou_cl = r.iiou_ca = std::nan("");
    return r;
  };
  std::vector<std::pair<std::string, metrics::MetricsReport>> rows;
  metrics::ReportAccumulator all(metrics::Arm::dfs, tax, palette);
  for (const auto& [arm, dir] : arms) {
    metrics::ReportAccumulator acc(arm, tax, palette);
    int n = 0;
    for (const auto& [name, gt] : gts) {
      const auto pp = dir / name;
      if (!fs::is_regular_file(pp)) throw ValidationError("prediction missing for " + name + " in " + dir.string());
      const auto pred = io::read_labels(pp);
      const InstanceMap* inst = insts.empty() ? nullptr : &insts.at(name);
      for (auto* a : {&acc, &all}) {
        a->add_segmentation(pred, gt, inst, inst ? &sizes : nullptr);
        a->add_segmap(pred, gt);
      }
      ++n;
    }
    rows.emplace_back(flat ? "pred" : metrics::to_string(arm), finish(acc));
    log << rows.back().first << ": " << n << " label maps, IoU-cl " << rows.back().second.iou_cl << "\n";
  }
  rows.emplace_back("all", finish(all));
  if (!opt.report.empty()) {
    if (opt.report.has_parent_path()) fs::create_directories(opt.report.parent_path());
    std::ofstream out(opt.report);
    if (!out) throw Error("cannot write " + opt.report.string());
    report::write_metrics_csv(out, rows);
    log << "report " << opt.report.string() << "\n";
  }
  return rows;
}

}  // namespace dfs::pipeline
