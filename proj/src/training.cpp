#include "dfs/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dfs/error.hpp"
#include "dfs/io.hpp"
#include "dfs/seed.hpp"

namespace dfs::train {
namespace {

using json = nlohmann::json;
using losses::LossBreakdown;
using metrics::MetricsReport;
using nn::Var;

// Seed streams of one run.
enum Stream : std::uint64_t {
  kShuffle = 3,
  kSegnetInit = 10,
  kGeneratorInit = 20,
  kDiscriminatorInit = 21,
  kProtocol = 40,
};

void check_finite(const LossBreakdown& b, long step, long last_finite) {
  for (double v : {b.gan, b.pixel, b.percep, b.seg, b.total})
    if (!std::isfinite(v))
      throw NumericError("non-finite loss at step " + std::to_string(step) + " (gan=" + std::to_string(b.gan) +
                         " pixel=" + std::to_string(b.pixel) + " percep=" + std::to_string(b.percep) +
                         " seg=" + std::to_string(b.seg) + "); last finite step " + std::to_string(last_finite));
}

LossBreakdown mean_of(const std::vector<LossBreakdown>& log, std::size_t from) {
  LossBreakdown m;
  const std::size_t n = log.size() - from;
  if (n == 0) return m;
  for (std::size_t i = from; i < log.size(); ++i) {
    m.gan += log[i].gan;
    m.pixel += log[i].pixel;
    m.percep += log[i].percep;
    m.seg += log[i].seg;
    m.total += log[i].total;
  }
  m.gan /= n;
  m.pixel /= n;
  m.percep /= n;
  m.seg /= n;
  m.total /= n;
  return m;
}

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

void write_step_log(const std::filesystem::path& p, const RunRecord& r) {
  std::ostringstream o;
  losses::write_loss_log_header(o);
  for (std::size_t i = 0; i < r.step_log.size(); ++i) losses::append_loss_log_row(o, static_cast<long>(i), r.step_log[i]);
  write_text(p, o.str());
}

json breakdown_json(const LossBreakdown& b) {
  return {{"gan", b.gan}, {"pixel", b.pixel}, {"percep", b.percep}, {"seg", b.seg}, {"total", b.total}};
}

LossBreakdown breakdown_from(const json& j) {
  return {j.at("gan"), j.at("pixel"), j.at("percep"), j.at("seg"), j.at("total")};
}

json report_json(const MetricsReport& r) {
  return {{"arm", metrics::to_string(r.arm)}, {"psnr", r.psnr},       {"ssim", r.ssim},
          {"mse", r.mse},                    {"iou_cl", r.iou_cl},   {"iiou_cl", r.iiou_cl},
          {"iou_ca", r.iou_ca},              {"iiou_ca", r.iiou_ca}, {"seg_psnr", r.seg_psnr},
          {"seg_ssim", r.seg_ssim},          {"seg_loss", r.seg_loss}};
}

MetricsReport report_from(const json& j) {
  MetricsReport r;
  r.arm = metrics::parse_arm(j.at("arm"));
  r.psnr = j.at("psnr");
  r.ssim = j.at("ssim");
  r.mse = j.at("mse");
  r.iou_cl = j.at("iou_cl");
  r.iiou_cl = j.at("iiou_cl");
  r.iou_ca = j.at("iou_ca");
  r.iiou_ca = j.at("iiou_ca");
  r.seg_psnr = j.at("seg_psnr");
  r.seg_ssim = j.at("seg_ssim");
  r.seg_loss = j.at("seg_loss");
  return r;
}

// Applies f to every numeric field of a report.
template <typename F>
void for_each_field(MetricsReport& r, F f) {
  for (double* v : {&r.psnr, &r.ssim, &r.mse, &r.iou_cl, &r.iiou_cl, &r.iou_ca, &r.iiou_ca, &r.seg_psnr,
                    &r.seg_ssim, &r.seg_loss})
    f(*v);
}

std::size_t valid_pixels(const std::vector<std::uint8_t>& labels) {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != kIgnoreLabel; }));
}

}  // namespace

std::string to_string(Regime r) {
  switch (r) {
    case Regime::segnet:
      return "segnet";
    case Regime::dehaze:
      return "dehaze";
    default:
      return "dfs";
  }
}

Regime parse_regime(const std::string& s) {
  if (s == "segnet") return Regime::segnet;
  if (s == "dehaze") return Regime::dehaze;
  if (s == "dfs") return Regime::dfs;
  throw ConfigError("unknown regime '" + s + "' (expected segnet, dehaze or dfs)");
}

TrainConfig TrainConfig::defaults(Regime regime, models::Profile profile) {
  TrainConfig c;
  c.regime = regime;
  c.profile = profile;
  const bool paper = profile == models::Profile::paper;
  switch (regime) {
    case Regime::segnet:
      c.epochs = 40;
      c.batch_size = 16;
      c.lr = 2e-3;
      c.beta1 = 0.9;
      c.weights = {10, 10, 0};
      break;
    case Regime::dehaze:
      c.epochs = paper ? 200 : 30;
      c.batch_size = 16;
      c.weights = {10, 10, 0};
      break;
    case Regime::dfs:
      c.epochs = paper ? 100 : 30;
      c.batch_size = 8;
      c.weights = {10, 10, 5};
      break;
  }
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  try {
    weights.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (force_lambda3_zero && regime != Regime::dfs) throw ConfigError("force_lambda3_zero applies to the dfs regime only");
  if (regime == Regime::dehaze && weights.lambda3 != 0)
    throw ConfigError("dehaze regime requires lambda3 = 0, got " + std::to_string(weights.lambda3));
  if (regime == Regime::dfs && !force_lambda3_zero && !(weights.lambda3 > 0))
    throw ConfigError("dfs regime requires lambda3 > 0");
}

losses::LossWeights TrainConfig::effective_weights() const {
  losses::LossWeights w = weights;
  if (force_lambda3_zero) w.lambda3 = 0;
  return w;
}

std::string TrainConfig::echo() const {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "regime=" << to_string(regime) << "\nprofile=" << models::to_string(profile) << "\nepochs=" << epochs
    << "\nbatch_size=" << batch_size << "\noptimizer=adam\nlr=" << lr << "\nbeta1=" << beta1 << "\nbeta2=" << beta2
    << "\nlambda1=" << weights.lambda1 << "\nlambda2=" << weights.lambda2 << "\nlambda3=" << weights.lambda3
    << "\nseed=" << seed << "\nmax_steps=" << max_steps << "\nforce_lambda3_zero=" << (force_lambda3_zero ? 1 : 0)
    << "\nvgg_path=" << vgg_path << "\n";
  return o.str();
}

std::string RunRecord::to_json() const {
  json j;
  const TrainConfig& c = config;
  j["config"] = {{"regime", to_string(c.regime)},
                 {"profile", models::to_string(c.profile)},
                 {"epochs", c.epochs},
                 {"batch_size", c.batch_size},
                 {"optimizer", {{"name", "adam"}, {"lr", c.lr}, {"betas", {c.beta1, c.beta2}}}},
                 {"weights", {c.weights.lambda1, c.weights.lambda2, c.weights.lambda3}},
                 {"seed", c.seed},
                 {"max_steps", c.max_steps},
                 {"force_lambda3_zero", c.force_lambda3_zero},
                 {"vgg_path", c.vgg_path},
                 {"run_dir", c.run_dir.string()}};
  j["step_log"] = json::array();
  for (const auto& b : step_log) j["step_log"].push_back(breakdown_json(b));
  j["disc_log"] = disc_log;
  j["epochs"] = json::array();
  for (const auto& e : epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"steps", e.steps},
                           {"train", breakdown_json(e.train)},
                           {"val", breakdown_json(e.val)},
                           {"val_metrics", report_json(e.val_metrics)},
                           {"val_score", e.val_score}});
  j["best_epoch"] = best_epoch;
  j["best_score"] = best_score;
  j["checkpoints"] = checkpoints;
  j["frozen_before"] = frozen_before;
  j["frozen_after"] = frozen_after;
  j["test_id"] = test_id;
  j["test_reports"] = json::array();
  for (const auto& [arm, rep] : test_reports) j["test_reports"].push_back(report_json(rep));
  return j.dump(1);
}

RunRecord RunRecord::from_json(const std::string& text) {
  RunRecord r;
  try {
    const json j = json::parse(text);
    const json& c = j.at("config");
    r.config.regime = parse_regime(c.at("regime"));
    r.config.profile = models::parse_profile(c.at("profile"));
    r.config.epochs = c.at("epochs");
    r.config.batch_size = c.at("batch_size");
    r.config.lr = c.at("optimizer").at("lr");
    r.config.beta1 = c.at("optimizer").at("betas").at(0);
    r.config.beta2 = c.at("optimizer").at("betas").at(1);
    r.config.weights = {c.at("weights").at(0), c.at("weights").at(1), c.at("weights").at(2)};
    r.config.seed = c.at("seed");
    r.config.max_steps = c.at("max_steps");
    r.config.force_lambda3_zero = c.at("force_lambda3_zero");
    r.config.vgg_path = c.at("vgg_path");
    r.config.run_dir = c.at("run_dir").get<std::string>();
    for (const auto& b : j.at("step_log")) r.step_log.push_back(breakdown_from(b));
    r.disc_log = j.at("disc_log").get<std::vector<double>>();
    for (const auto& e : j.at("epochs"))
      r.epochs.push_back({e.at("epoch"), e.at("steps"), breakdown_from(e.at("train")), breakdown_from(e.at("val")),
                          report_from(e.at("val_metrics")), e.at("val_score")});
    r.best_epoch = j.at("best_epoch");
    r.best_score = j.at("best_score");
    r.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
    r.frozen_before = j.at("frozen_before").get<std::map<std::string, std::string>>();
    r.frozen_after = j.at("frozen_after").get<std::map<std::string, std::string>>();
    r.test_id = j.value("test_id", "");
    if (j.contains("test_reports"))
      for (const auto& t : j.at("test_reports")) {
        const MetricsReport rep = report_from(t);
        r.test_reports[rep.arm] = rep;
      }
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed run record: ") + e.what());
  } catch (const ValidationError& e) {
    throw LoadError(std::string("malformed run record: ") + e.what());
  }
  return r;
}

template <typename T>
std::string parameter_checksum(const nn::Module<T>& m) {
  return io::sha256_hex(m.parameter_bytes());
}

template std::string parameter_checksum<float>(const nn::Module<float>&);
template std::string parameter_checksum<double>(const nn::Module<double>&);

Adam::Adam(const nn::Module<float>& module, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : module.parameters())
    if (p.var.requires_grad()) {
      params_.push_back(p.var);
      m_.emplace_back(p.var.value().numel(), 0.0f);
      v_.emplace_back(p.var.value().numel(), 0.0f);
    }
}

void Adam::step() {
  ++t_;
  const double c1 = 1 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& g = params_[k].grad();
    if (g.empty()) continue;
    auto& w = params_[k].mutable_value();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(b1_ * m[i] + (1 - b1_) * gi);
      v[i] = static_cast<float>(b2_ * v[i] + (1 - b2_) * gi * gi);
      w[i] = static_cast<float>(w[i] - lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
    }
  }
}

Batch make_batch(const std::vector<data::Scene>& scenes, const std::vector<std::size_t>& index) {
  std::vector<Image> hazy, clean;
  std::vector<SegLabelMap> labels;
  for (std::size_t i : index) {
    hazy.push_back(scenes.at(i).hazy);
    clean.push_back(scenes.at(i).clean);
    labels.push_back(scenes.at(i).labels);
  }
  Batch b{models::to_tensor<float>(hazy), models::to_tensor<float>(clean), losses::flatten_labels(labels)};
  return b;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  auto order = range(0, n);
  std::mt19937_64 rng(derive_seed(seed, kShuffle, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double pixel_accuracy(const models::SegNet<float>& net, const std::vector<data::Scene>& scenes, bool on_hazy) {
  std::size_t hit = 0, total = 0;
  for (std::size_t b = 0; b < scenes.size(); b += 8) {
    std::vector<Image> imgs;
    for (std::size_t i = b; i < std::min(scenes.size(), b + 8); ++i)
      imgs.push_back(on_hazy ? scenes[i].hazy : scenes[i].clean);
    const auto pred = net.predict(models::to_tensor<float>(imgs));
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const auto& gt = scenes[b + k].labels;
      for (std::size_t p = 0; p < gt.size(); ++p) {
        if (gt.values()[p] == kIgnoreLabel) continue;
        ++total;
        hit += pred[k].values()[p] == gt.values()[p];
      }
    }
  }
  return total ? static_cast<double>(hit) / total : 0.0;
}

SegnetResult train_segnet(const TrainConfig& cfg, const std::vector<data::Scene>& train,
                          const models::SegNetSpec& spec,
                          const std::vector<const std::vector<data::Scene>*>& disjoint_from) {
  cfg.validate();
  if (cfg.regime != Regime::segnet) throw ConfigError("train_segnet needs regime=segnet");
  if (train.empty()) throw ValidationError("SEG-NET training set is empty");
  std::set<std::string> ids;
  for (const auto& s : train) ids.insert(s.id);
  for (const auto* other : disjoint_from)
    for (const auto& s : *other)
      if (ids.count(s.id)) throw ValidationError("data leak: scene '" + s.id + "' is also in a dehazing split");

  SegnetResult res;
  res.record.config = cfg;
  res.net = std::make_unique<models::SegNet<float>>(spec, derive_seed(cfg.seed, kSegnetInit));
  auto& net = *res.net;
  Adam opt(net, cfg.lr, cfg.beta1, cfg.beta2);
  std::optional<nn::Checkpoint> best;
  long steps = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), cfg.seed, epoch);
    const std::size_t first = res.record.step_log.size();
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<std::size_t> idx(order.begin() + b, order.begin() + std::min(order.size(), b + cfg.batch_size));
      const Batch batch = make_batch(train, idx);
      auto loss = nn::masked_cross_entropy(net.forward(Var<float>(batch.clean)), batch.labels);
      LossBreakdown lb;
      lb.seg = lb.total = loss.item();
      check_finite(lb, steps, steps - 1);
      net.zero_grad();
      nn::backward(loss);
      opt.step();
      res.record.step_log.push_back(lb);
      ++steps;
      if (cfg.max_steps && steps >= cfg.max_steps) break;
    }
    EpochRecord er;
    er.epoch = epoch;
    er.steps = steps;
    er.train = mean_of(res.record.step_log, first);
    er.val_score = -er.train.total;
    res.record.epochs.push_back(er);
    if (res.record.best_epoch < 0 || er.val_score > res.record.best_score) {
      res.record.best_epoch = epoch;
      res.record.best_score = er.val_score;
      best = nn::to_checkpoint(net);
    }
    if (cfg.max_steps && steps >= cfg.max_steps) break;
  }
  if (best) nn::assign_checkpoint(*best, net);
  net.set_trainable(false);
  res.train_pixel_accuracy = pixel_accuracy(net, train);

  if (!cfg.run_dir.empty()) {
    std::filesystem::create_directories(cfg.run_dir);
    const auto ckpt = cfg.run_dir / "segnet.ckpt";
    nn::save_checkpoint(ckpt, net);
    res.record.checkpoints["segnet"] = ckpt.string();
    write_text(cfg.run_dir / "config.txt", cfg.echo());
    write_step_log(cfg.run_dir / "loss_log.csv", res.record);
    write_text(cfg.run_dir / "record.json", res.record.to_json());
  }
  return res;
}

std::vector<Image> dehaze_all(const models::Generator<float>& gen, const std::vector<data::Scene>& scenes,
                              int batch_size) {
  std::vector<Image> out;
  for (std::size_t b = 0; b < scenes.size(); b += batch_size) {
    std::vector<Image> hazy;
    for (std::size_t i = b; i < std::min(scenes.size(), b + batch_size); ++i) hazy.push_back(scenes[i].hazy);
    auto y = gen.forward(Var<float>(models::to_tensor<float>(hazy))).detach();
    for (std::size_t k = 0; k < hazy.size(); ++k) out.push_back(models::to_image(y.value(), static_cast<int>(k)));
  }
  return out;
}

double mean_seg_loss(const models::SegNet<float>& segnet, const std::vector<Image>& images,
                     const std::vector<data::Scene>& scenes, int batch_size) {
  if (images.size() != scenes.size()) throw ValidationError("image/scene count mismatch");
  double sum = 0;
  std::size_t pixels = 0;
  for (std::size_t b = 0; b < images.size(); b += batch_size) {
    const std::size_t e = std::min(images.size(), b + batch_size);
    std::vector<Image> imgs(images.begin() + b, images.begin() + e);
    std::vector<SegLabelMap> labels;
    for (std::size_t i = b; i < e; ++i) labels.push_back(scenes[i].labels);
    const auto flat = losses::flatten_labels(labels);
    const std::size_t valid = valid_pixels(flat);
    const double v = losses::seg_loss(segnet.forward(Var<float>(models::to_tensor<float>(imgs))), flat).item();
    sum += v * valid;
    pixels += valid;
  }
  return pixels ? sum / pixels : 0.0;
}

namespace {

struct ValResult {
  LossBreakdown loss;
  MetricsReport metrics;
};

ValResult validate_generator(const models::Generator<float>& gen, const models::Discriminator<float>& disc,
                             const models::PerceptualExtractor<float>& percep, const models::SegNet<float>* segnet,
                             const std::vector<data::Scene>& val, const losses::LossWeights& w, int batch_size,
                             metrics::Arm arm) {
  ValResult r;
  double n = 0;
  double mse_sum = 0, ssim_sum = 0;
  for (std::size_t b = 0; b < val.size(); b += batch_size) {
    const auto idx = range(b, std::min(val.size(), b + batch_size));
    const Batch batch = make_batch(val, idx);
    Var<float> hazy(batch.hazy), clean(batch.clean);
    auto fake = gen.forward(hazy);
    LossBreakdown lb;
    lb.gan = losses::gan_generator_loss(disc.forward(hazy, fake)).item();
    lb.pixel = losses::pixel_loss(fake, clean).item();
    lb.percep = losses::perceptual_loss(fake, clean, percep).item();
    if (segnet) lb.seg = losses::seg_loss(segnet->forward(fake), batch.labels).item();
    lb = losses::composite_generator_loss(lb, w);
    const double k = static_cast<double>(idx.size());
    r.loss.gan += k * lb.gan;
    r.loss.pixel += k * lb.pixel;
    r.loss.percep += k * lb.percep;
    r.loss.seg += k * lb.seg;
    r.loss.total += k * lb.total;
    n += k;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Image out = models::to_image(fake.value(), static_cast<int>(i));
      mse_sum += metrics::mse(out, val[idx[i]].clean);
      ssim_sum += metrics::ssim(out, val[idx[i]].clean);
    }
  }
  r.loss.gan /= n;
  r.loss.pixel /= n;
  r.loss.percep /= n;
  r.loss.seg /= n;
  r.loss.total /= n;
  r.metrics.arm = arm;
  r.metrics.mse = mse_sum / n;
  r.metrics.psnr = metrics::psnr_from_mse(r.metrics.mse);
  r.metrics.ssim = ssim_sum / n;
  r.metrics.seg_loss = r.loss.seg;
  return r;
}

}  // namespace

DehazerResult train_dehazer(const TrainConfig& cfg, const std::vector<data::Scene>& train,
                            const std::vector<data::Scene>& val, const models::SegNet<float>* segnet,
                            const StepHook& hook) {
  cfg.validate();
  if (cfg.regime == Regime::segnet) throw ConfigError("train_dehazer needs regime dehaze or dfs");
  if (cfg.regime == Regime::dfs && !segnet) throw ConfigError("dfs regime requires a SEG-NET checkpoint");
  if (segnet && segnet->trainable()) throw ConfigError("SEG-NET must be frozen before dehazer training");
  if (train.empty()) throw ValidationError("dehazing training set is empty");
  if (val.empty()) throw ValidationError("dehazing validation set is empty");
  const losses::LossWeights w = cfg.effective_weights();
  const metrics::Arm arm = cfg.regime == Regime::dfs ? metrics::Arm::dfs : metrics::Arm::dehaze;

  auto gen = std::make_unique<models::Generator<float>>(models::GeneratorSpec::for_profile(cfg.profile),
                                                        derive_seed(cfg.seed, kGeneratorInit));
  models::Discriminator<float> disc(models::DiscriminatorSpec::for_profile(cfg.profile),
                                    derive_seed(cfg.seed, kDiscriminatorInit));
  models::PerceptualExtractor<float> percep(models::PerceptualExtractorSpec::for_profile(cfg.profile, cfg.vgg_path));

  DehazerResult res;
  RunRecord& rec = res.record;
  rec.config = cfg;
  rec.frozen_before["perceptual"] = parameter_checksum(percep);
  if (segnet) rec.frozen_before["segnet"] = parameter_checksum(*segnet);

  // normalizer of the dfs selection score: seg loss of the raw hazy inputs
  double seg_ref = 1;
  if (segnet && cfg.regime == Regime::dfs) {
    std::vector<Image> hazy;
    for (const auto& s : val) hazy.push_back(s.hazy);
    seg_ref = std::max(1e-12, mean_seg_loss(*segnet, hazy, val, cfg.batch_size));
  }

  Adam opt_g(*gen, cfg.lr, cfg.beta1, cfg.beta2);
  Adam opt_d(disc, cfg.lr, cfg.beta1, cfg.beta2);
  std::optional<nn::Checkpoint> best;
  long steps = 0;
  bool capped = false;
  for (int epoch = 0; epoch < cfg.epochs && !capped; ++epoch) {
    const auto order = epoch_order(train.size(), cfg.seed, epoch);
    const std::size_t first = rec.step_log.size();
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<std::size_t> idx(order.begin() + b, order.begin() + std::min(order.size(), b + cfg.batch_size));
      const Batch batch = make_batch(train, idx);
      Var<float> hazy(batch.hazy), clean(batch.clean);
      try {
        auto fake = gen->forward(hazy);

        disc.set_trainable(true);
        auto d_loss = losses::gan_discriminator_loss(disc.forward(hazy, clean), disc.forward(hazy, fake.detach()));
        if (!std::isfinite(d_loss.item()))
          throw NumericError("non-finite discriminator loss at step " + std::to_string(steps) + "; last finite step " +
                             std::to_string(steps - 1));
        disc.zero_grad();
        nn::backward(d_loss);
        opt_d.step();
        disc.set_trainable(false);

        auto gan = losses::gan_generator_loss(disc.forward(hazy, fake));
        auto pixel = losses::pixel_loss(fake, clean);
        auto perc = losses::perceptual_loss(fake, clean, percep);
        Var<float> seg;
        double seg_value = 0;
        if (w.lambda3 != 0) {
          seg = losses::seg_loss(segnet->forward(fake), batch.labels);
          seg_value = seg.item();
        } else if (segnet) {
          seg_value = losses::seg_loss(segnet->forward(fake.detach()), batch.labels).item();
        }
        auto total = losses::composite_generator_loss(gan, pixel, perc, seg, w);
        const LossBreakdown lb{gan.item(), pixel.item(), perc.item(), seg_value, total.item()};
        check_finite(lb, steps, steps - 1);
        gen->zero_grad();
        nn::backward(total);
        opt_g.step();

        rec.step_log.push_back(lb);
        rec.disc_log.push_back(d_loss.item());
      } catch (const NumericError& e) {
        const std::string what = e.what();
        if (what.find("last finite step") != std::string::npos) throw;
        throw NumericError(what + " at step " + std::to_string(steps) + "; last finite step " +
                           std::to_string(steps - 1));
      }
      if (hook) hook(steps, rec.step_log.back());
      ++steps;
      if (cfg.max_steps && steps >= cfg.max_steps) {
        capped = true;
        break;
      }
    }

    gen->set_trainable(false);
    const ValResult v = validate_generator(*gen, disc, percep, segnet, val, w, cfg.batch_size, arm);
    gen->set_trainable(true);
    EpochRecord er;
    er.epoch = epoch;
    er.steps = steps;
    er.train = mean_of(rec.step_log, first);
    er.val = v.loss;
    er.val_metrics = v.metrics;
    er.val_score = cfg.regime == Regime::dfs ? v.metrics.ssim - v.loss.seg / seg_ref : v.metrics.ssim;
    rec.epochs.push_back(er);
    if (rec.best_epoch < 0 || er.val_score > rec.best_score) {
      rec.best_epoch = epoch;
      rec.best_score = er.val_score;
      best = nn::to_checkpoint(*gen);
    }
  }

  res.best = std::make_unique<models::Generator<float>>(gen->spec(), 0);
  nn::assign_checkpoint(best ? *best : nn::to_checkpoint(*gen), *res.best);
  res.best->set_trainable(false);
  gen->set_trainable(false);
  res.last = std::move(gen);

  rec.frozen_after["perceptual"] = parameter_checksum(percep);
  if (segnet) rec.frozen_after["segnet"] = parameter_checksum(*segnet);

  if (!cfg.run_dir.empty()) {
    std::filesystem::create_directories(cfg.run_dir);
    const auto best_path = cfg.run_dir / "generator_best.ckpt";
    const auto last_path = cfg.run_dir / "generator_last.ckpt";
    const auto disc_path = cfg.run_dir / "discriminator.ckpt";
    nn::save_checkpoint(best_path, *res.best);
    nn::save_checkpoint(last_path, *res.last);
    nn::save_checkpoint(disc_path, disc);
    rec.checkpoints = {{"generator_best", best_path.string()},
                       {"generator_last", last_path.string()},
                       {"discriminator", disc_path.string()}};
    write_text(cfg.run_dir / "config.txt", cfg.echo());
    write_step_log(cfg.run_dir / "loss_log.csv", rec);
    write_text(cfg.run_dir / "record.json", rec.to_json());
  }
  return res;
}

MetricsReport evaluate_arm(metrics::Arm arm, const std::vector<Image>& images, const std::vector<data::Scene>& scenes,
                           const models::SegNet<float>& segnet, const models::SegNet<float>& evaluator,
                           const metrics::Taxonomy& tax, const metrics::Palette& palette) {
  if (images.size() != scenes.size()) throw ValidationError("image/scene count mismatch");
  if (scenes.empty()) throw ValidationError("evaluation set is empty");
  const bool with_instances = std::all_of(scenes.begin(), scenes.end(), [](const auto& s) { return s.instances.size() > 0; });
  metrics::InstanceSizeTable sizes;
  if (with_instances) {
    std::vector<SegLabelMap> gts;
    std::vector<InstanceMap> insts;
    for (const auto& s : scenes) {
      gts.push_back(s.labels);
      insts.push_back(s.instances);
    }
    sizes = metrics::instance_sizes(gts, insts, tax);
  }
  metrics::ReportAccumulator acc(arm, tax, palette);
  for (std::size_t b = 0; b < images.size(); b += 8) {
    const std::size_t e = std::min(images.size(), b + 8);
    std::vector<Image> imgs(images.begin() + b, images.begin() + e);
    const auto tensor = models::to_tensor<float>(imgs);
    const auto pred = evaluator.predict(tensor);
    const auto seg_pred = segnet.predict(tensor);
    for (std::size_t i = b; i < e; ++i) {
      acc.add_image(images[i], scenes[i].clean);
      acc.add_segmentation(pred[i - b], scenes[i].labels, with_instances ? &scenes[i].instances : nullptr,
                           with_instances ? &sizes : nullptr);
      acc.add_segmap(seg_pred[i - b], scenes[i].labels);
    }
  }
  acc.add_seg_loss(mean_seg_loss(segnet, images, scenes), 1);
  MetricsReport r = acc.report();
  if (!with_instances) r.iiou_cl = r.iiou_ca = std::nan("");
  return r;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) g.push_back(i == 9 ? 50.0 : std::exp(std::log(50.0) * i / 9.0));
  return g;
}

GridResult grid_search_lambda(const TrainConfig& base, const std::vector<int>& which,
                              const std::vector<double>& candidates, const std::vector<data::Scene>& train,
                              const std::vector<data::Scene>& val, const models::SegNet<float>* segnet) {
  if (val.empty()) throw ValidationError("grid search needs a non-empty validation set");
  if (candidates.empty()) throw ValidationError("grid search needs at least one candidate");
  if (which.empty()) throw ConfigError("grid search needs at least one weight to vary");
  for (int k : which)
    if (k < 1 || k > 3) throw ConfigError("grid search weight index must be 1, 2 or 3, got " + std::to_string(k));
  GridResult res;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    TrainConfig cfg = base;
    for (int k : which) (k == 1 ? cfg.weights.lambda1 : k == 2 ? cfg.weights.lambda2 : cfg.weights.lambda3) = candidates[i];
    if (!base.run_dir.empty()) cfg.run_dir = base.run_dir / ("candidate-" + std::to_string(i));
    const auto run = train_dehazer(cfg, train, val, segnet);
    res.rows.push_back({candidates[i], cfg.weights, run.record.best_score});
  }
  std::stable_sort(res.rows.begin(), res.rows.end(), [](const GridRow& a, const GridRow& b) { return a.val_score > b.val_score; });
  res.winner = base;
  res.winner.weights = res.rows.front().weights;
  return res;
}

std::string scene_set_hash(const std::vector<data::Scene>& scenes) {
  std::vector<std::uint8_t> bytes;
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  };
  for (const auto& s : scenes) {
    put(s.id.data(), s.id.size() + 1);
    for (const Image* img : {&s.clean, &s.hazy}) {
      const int dims[3] = {img->height(), img->width(), img->channels()};
      put(dims, sizeof dims);
      put(img->values().data(), img->values().size_bytes());
    }
    put(s.labels.values().data(), s.labels.values().size_bytes());
    put(s.instances.values().data(), s.instances.values().size_bytes());
  }
  return io::sha256_hex(bytes);
}

std::vector<std::uint64_t> protocol_seeds(std::uint64_t seed, int runs) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < runs; ++i) s.push_back(derive_seed(seed, kProtocol, static_cast<std::uint64_t>(i)) >> 16);
  return s;
}

ProtocolResult five_run_protocol(const TrainConfig& dfs_cfg, const std::vector<data::Scene>& train,
                                 const std::vector<data::Scene>& val, const std::vector<data::Scene>& test,
                                 const models::SegNet<float>& segnet, const models::SegNet<float>& evaluator,
                                 const metrics::Taxonomy& tax, const metrics::Palette& palette, int runs,
                                 const std::string& test_id) {
  if (runs < 1) throw ConfigError("protocol needs at least one run");
  if (dfs_cfg.regime != Regime::dfs) throw ConfigError("five_run_protocol takes the dfs configuration");
  const std::string tid = test_id.empty() ? scene_set_hash(test) : test_id;
  ProtocolResult res;
  res.seeds = protocol_seeds(dfs_cfg.seed, runs);
  std::vector<Image> hazy, clean;
  for (const auto& s : test) {
    hazy.push_back(s.hazy);
    clean.push_back(s.clean);
  }
  for (int i = 0; i < runs; ++i) {
    TrainConfig dfs = dfs_cfg;
    dfs.seed = res.seeds[i];
    dfs.force_lambda3_zero = false;
    TrainConfig dehaze = dfs;
    dehaze.regime = Regime::dehaze;
    dehaze.weights.lambda3 = 0;
    if (!dfs_cfg.run_dir.empty()) {
      const auto dir = dfs_cfg.run_dir / ("run-" + std::to_string(i));
      dfs.run_dir = dir / "dfs";
      dehaze.run_dir = dir / "dehaze";
    }
    std::map<metrics::Arm, MetricsReport> arms;
    try {
      auto a = train_dehazer(dehaze, train, val, &segnet);
      auto b = train_dehazer(dfs, train, val, &segnet);
      arms[metrics::Arm::hazy] = evaluate_arm(metrics::Arm::hazy, hazy, test, segnet, evaluator, tax, palette);
      arms[metrics::Arm::dehaze] =
          evaluate_arm(metrics::Arm::dehaze, dehaze_all(*a.best, test), test, segnet, evaluator, tax, palette);
      arms[metrics::Arm::dfs] = evaluate_arm(metrics::Arm::dfs, dehaze_all(*b.best, test), test, segnet, evaluator, tax, palette);
      arms[metrics::Arm::gt] = evaluate_arm(metrics::Arm::gt, clean, test, segnet, evaluator, tax, palette);
      a.record.test_id = b.record.test_id = tid;
      a.record.test_reports[metrics::Arm::dehaze] = arms[metrics::Arm::dehaze];
      for (metrics::Arm arm : {metrics::Arm::hazy, metrics::Arm::dfs, metrics::Arm::gt})
        b.record.test_reports[arm] = arms[arm];
      if (!dehaze.run_dir.empty()) {
        write_text(dehaze.run_dir / "record.json", a.record.to_json());
        write_text(dfs.run_dir / "record.json", b.record.to_json());
      }
      res.dehaze_records.push_back(std::move(a.record));
      res.dfs_records.push_back(std::move(b.record));
    } catch (const std::exception& e) {
      throw Error("five-run protocol aborted in run " + std::to_string(i) + " (seed " + std::to_string(res.seeds[i]) +
                  "): " + e.what());
    }
    res.runs.push_back(std::move(arms));
  }
  for (metrics::Arm arm : metrics::kArms) {
    MetricsReport mean, sd;
    mean.arm = sd.arm = arm;
    std::vector<MetricsReport> rs;
    for (const auto& r : res.runs) rs.push_back(r.at(arm));
    for (const auto& r : rs) {
      MetricsReport x = r;
      std::vector<double*> dst;
      for_each_field(mean, [&](double& v) { dst.push_back(&v); });
      std::size_t k = 0;
      for_each_field(x, [&](double& v) { *dst[k++] += v / runs; });
    }
    for (const auto& r : rs) {
      MetricsReport x = r, m = mean;
      std::vector<double> mv;
      for_each_field(m, [&](double& v) { mv.push_back(v); });
      std::vector<double*> dst;
      for_each_field(sd, [&](double& v) { dst.push_back(&v); });
      std::size_t k = 0;
      for_each_field(x, [&](double& v) {
        *dst[k] += (v - mv[k]) * (v - mv[k]) / runs;
        ++k;
      });
    }
    for_each_field(sd, [](double& v) { v = std::sqrt(v); });
    res.mean[arm] = mean;
    res.stddev[arm] = sd;
  }
  return res;
}

}  // namespace dfs::train
