#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dfs/error.hpp"
#include "dfs/losses.hpp"
#include "support/gradcheck.hpp"

namespace {

using namespace dfs;
using namespace dfs::losses;
using nn::Shape;
using nn::Tensor;
using nn::Var;
using dfs::testing::random_tensor;

Var<double> constant(Shape s, double v) { return Var<double>(Tensor<double>(s, v)); }

double bce_oracle(const Tensor<double>& s, double target) {
  double sum = 0;
  for (double x : s.values()) {
    const double p = 1.0 / (1.0 + std::exp(-x));
    sum += -(target * std::log(p) + (1 - target) * std::log(1 - p));
  }
  return sum / static_cast<double>(s.numel());
}

TEST(GanLoss, ClosedForms) {
  EXPECT_NEAR(gan_generator_loss(constant({2, 1, 4, 4}, 0.0)).item(), std::log(2.0), 1e-15);
  EXPECT_LT(gan_generator_loss(constant({1, 1, 4, 4}, 40.0)).item(), 1e-15);
  EXPECT_NEAR(gan_discriminator_loss(constant({1, 1, 4, 4}, 0.0), constant({1, 1, 4, 4}, 0.0)).item(),
              std::log(2.0), 1e-15);
  EXPECT_LT(gan_discriminator_loss(constant({1, 1, 4, 4}, 40.0), constant({1, 1, 4, 4}, -40.0)).item(), 1e-15);
}

TEST(GanLoss, MatchesScalarLoopOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto real = random_tensor<double>({1, 1, 4, 4}, rng, -5, 5);
    auto fake = random_tensor<double>({1, 1, 4, 4}, rng, -5, 5);
    EXPECT_NEAR(gan_generator_loss(Var<double>(fake)).item(), bce_oracle(fake, 1.0), 1e-9);
    EXPECT_NEAR(gan_discriminator_loss(Var<double>(real), Var<double>(fake)).item(),
                0.5 * (bce_oracle(real, 1.0) + bce_oracle(fake, 0.0)), 1e-9);
  }
}

TEST(GanLoss, DecreasesAsDiscriminatorIsFooled) {
  double prev = 1e9;
  for (double s = -4; s <= 4; s += 0.5) {
    const double l = gan_generator_loss(constant({1, 1, 2, 2}, s)).item();
    EXPECT_LT(l, prev);
    EXPECT_GE(l, 0.0);
    prev = l;
  }
}

TEST(GanLoss, NonFiniteScoresAreNumericErrors) {
  auto s = constant({1, 1, 2, 2}, 0.0);
  s.mutable_value()[1] = std::nan("");
  EXPECT_THROW(gan_generator_loss(s), NumericError);
}

TEST(GanLoss, LeastSquaresSwitch) {
  EXPECT_NEAR(gan_generator_loss(constant({1, 1, 2, 2}, 0.0), GanMode::lsgan).item(), 1.0, 1e-15);
  EXPECT_NEAR(gan_discriminator_loss(constant({1, 1, 2, 2}, 1.0), constant({1, 1, 2, 2}, 0.0), GanMode::lsgan).item(),
              0.0, 1e-15);
}

TEST(PixelLoss, ClosedFormsAndOracle) {
  EXPECT_EQ(pixel_loss(constant({1, 3, 4, 4}, 0.3), constant({1, 3, 4, 4}, 0.3)).item(), 0.0);
  EXPECT_NEAR(pixel_loss(constant({1, 3, 4, 4}, 0.0), constant({1, 3, 4, 4}, 0.25)).item(), 0.25, 1e-15);
  std::mt19937_64 rng(2);
  auto a = random_tensor<double>({2, 3, 8, 8}, rng, 0, 1), b = random_tensor<double>({2, 3, 8, 8}, rng, 0, 1);
  double l1 = 0, l2 = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    l1 += std::abs(a[i] - b[i]);
    l2 += (a[i] - b[i]) * (a[i] - b[i]);
  }
  EXPECT_NEAR(pixel_loss(Var<double>(a), Var<double>(b)).item(), l1 / a.numel(), 1e-9);
  EXPECT_NEAR(pixel_loss(Var<double>(a), Var<double>(b), PixelMode::l2).item(), l2 / a.numel(), 1e-9);
  EXPECT_THROW(pixel_loss(Var<double>(a), constant({2, 3, 8, 4}, 0)), ValidationError);
}

TEST(PerceptualLoss, ZeroSymmetricAndOracle) {
  models::PerceptualExtractor<double> ex(models::PerceptualExtractorSpec::for_profile(models::Profile::tiny));
  std::mt19937_64 rng(3);
  Var<double> a(random_tensor<double>({1, 3, 16, 16}, rng, 0, 1)), b(random_tensor<double>({1, 3, 16, 16}, rng, 0, 1));
  EXPECT_EQ(perceptual_loss(a, a, ex).item(), 0.0);
  EXPECT_DOUBLE_EQ(perceptual_loss(a, b, ex).item(), perceptual_loss(b, a, ex).item());

  auto fa = ex.features(a), fb = ex.features(b);
  double sum = 0;
  for (std::size_t t = 0; t < fa.size(); ++t) {
    double m = 0;
    for (std::size_t i = 0; i < fa[t].value().numel(); ++i) {
      const double d = fa[t].value()[i] - fb[t].value()[i];
      m += d * d;
    }
    sum += m / fa[t].value().numel();
  }
  EXPECT_NEAR(perceptual_loss(a, b, ex).item(), sum / fa.size(), 1e-6);
}

TEST(SegLoss, ClosedForms) {
  // logits 0 / -1000 give an exactly one-hot softmax in double
  Tensor<double> scores({1, 4, 2, 2}, -1000.0);
  SegLabelMap labels(2, 2);
  const std::uint8_t l[] = {0, 3, 2, 1};
  for (int i = 0; i < 4; ++i) {
    labels.values()[i] = l[i];
    scores.plane(0, l[i])[i] = 0.0;
  }
  auto flat = flatten_labels({labels});
  EXPECT_EQ(seg_loss(Var<double>(scores), flat).item(), 0.0);
  EXPECT_NEAR(seg_loss(constant({1, 4, 2, 2}, 0.0), flat).item(), 0.1875, 1e-15);
  for (int k : {2, 5, 19})
    EXPECT_NEAR(seg_loss(constant({1, k, 2, 2}, 1.5), std::vector<std::uint8_t>(4, 1)).item(),
                (k - 1.0) / (k * k), 1e-15);
}

TEST(SegLoss, MatchesScalarLoopOracleWithIgnore) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = random_tensor<double>({1, 4, 8, 8}, rng, -3, 3);
    auto labels = dfs::testing::random_labels(8, 8, 4, rng, 0.2);
    double sum = 0;
    int used = 0;
    for (int i = 0; i < 64; ++i) {
      const std::uint8_t g = labels.values()[i];
      if (g == kIgnoreLabel) continue;
      double z = 0;
      for (int c = 0; c < 4; ++c) z += std::exp(s.plane(0, c)[i]);
      double px = 0;
      for (int c = 0; c < 4; ++c) {
        const double p = std::exp(s.plane(0, c)[i]) / z - (c == g ? 1.0 : 0.0);
        px += p * p;
      }
      sum += px / 4;
      ++used;
    }
    EXPECT_NEAR(seg_loss(Var<double>(s), flatten_labels({labels})).item(), sum / used, 1e-9);
  }
}

TEST(SegLoss, Errors) {
  EXPECT_THROW(seg_loss(constant({1, 4, 2, 2}, 0.0), std::vector<std::uint8_t>{0, 1, 4, 2}), ValidationError);
  EXPECT_EQ(seg_loss(constant({1, 4, 2, 2}, 0.0), std::vector<std::uint8_t>(4, kIgnoreLabel)).item(), 0.0);
}

TEST(Composite, LinearCombination) {
  EXPECT_EQ(composite_generator_loss(LossBreakdown{1, 1, 1, 1, 0}, LossWeights{10, 10, 5}).total, 26.0);
  EXPECT_EQ(composite_generator_loss(LossBreakdown{}, LossWeights{10, 10, 5}).total, 0.0);
  EXPECT_THROW(composite_generator_loss(LossBreakdown{}, LossWeights{-1, 10, 5}), ValidationError);
  EXPECT_THROW(composite_generator_loss(LossBreakdown{std::nan(""), 0, 0, 0, 0}, LossWeights{}), NumericError);
}

TEST(Composite, LambdaThreeZeroRecoversPlainObjective) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 3);
  for (int i = 0; i < 100; ++i) {
    LossBreakdown with{u(rng), u(rng), u(rng), u(rng), 0};
    LossBreakdown without = with;
    without.seg = 0;
    EXPECT_EQ(composite_generator_loss(with, {10, 10, 0}).total,
              composite_generator_loss(without, {10, 10, 0}).total);
    // linearity in each weight
    const double a = u(rng), b = u(rng);
    const double t0 = composite_generator_loss(with, {a, 1, 1}).total;
    const double t1 = composite_generator_loss(with, {a + b, 1, 1}).total;
    EXPECT_NEAR(t1 - t0, b * with.pixel, 1e-12);
    const double s0 = composite_generator_loss(with, {1, 1, a}).total;
    const double s1 = composite_generator_loss(with, {1, 1, a + b}).total;
    EXPECT_NEAR(s1 - s0, b * with.seg, 1e-12);
  }
}

TEST(Composite, GraphVersionAgreesWithScalarVersion) {
  dfs::testing::TinyLossFixture<double> f(6);
  LossBreakdown parts{f.gan().item(), f.pixel().item(), f.perceptual().item(), f.segmentation().item(), 0};
  const auto w = LossWeights{10, 10, 5};
  EXPECT_NEAR(f.composite(w).item(), composite_generator_loss(parts, w).total,
              1e-6 * composite_generator_loss(parts, w).total);
  Var<double> none;
  auto fake = f.gen.forward(f.hazy);
  auto eq1 = composite_generator_loss(gan_generator_loss(f.disc.forward(f.hazy, fake)), pixel_loss(fake, f.clean),
                                      perceptual_loss(fake, f.clean, f.percep), none, LossWeights{10, 10, 0});
  EXPECT_EQ(eq1.item(), f.composite({10, 10, 0}).item());
  EXPECT_THROW(composite_generator_loss(eq1, eq1, eq1, none, LossWeights{10, 10, 5}), ConfigError);
}

TEST(Gradients, DoublePrecisionPerObjective) {
  dfs::testing::TinyLossFixture<double> f(7);
  for (auto& [name, loss] : f.objectives()) {
    auto r = dfs::testing::check_generator_gradient(f.gen, loss, 24, 1e-5, 21);
    EXPECT_GE(r.sampled, 20);
    EXPECT_LT(r.max_relative_error, 1e-5) << name << " worst " << r.worst;
  }
}

// Pixel and perceptual terms at 32-bit; the full five-objective sweep at 32-bit
// runs in the acceptance suite.
TEST(Gradients, FloatPrecisionInterval) {
  dfs::testing::TinyLossFixture<float> f(8);
  auto objectives = f.objectives();
  for (std::size_t i : {1u, 2u}) {
    auto r = dfs::testing::check_generator_gradient(f.gen, objectives[i].second, 20, 3e-3, 22, 32);
    EXPECT_EQ(r.sampled, 20);
    EXPECT_LT(r.vector_relative_error, 1e-2) << objectives[i].first;
  }
}

TEST(Gradients, NothingReachesFrozenNetworks) {
  dfs::testing::TinyLossFixture<float> f(9);
  nn::backward(f.composite({10, 10, 5}));
  for (const auto& p : f.percep.parameters()) EXPECT_TRUE(p.var.grad().empty()) << p.name;
  for (const auto& p : f.seg.parameters()) EXPECT_TRUE(p.var.grad().empty()) << p.name;
  for (const auto& p : f.disc.parameters()) EXPECT_TRUE(p.var.grad().empty()) << p.name;
  bool any = false;
  for (const auto& p : f.gen.parameters()) any = any || !p.var.grad().empty();
  EXPECT_TRUE(any);
}

TEST(LossLog, CsvLayout) {
  std::ostringstream out;
  write_loss_log_header(out);
  append_loss_log_row(out, 3, LossBreakdown{0.5, 0.25, 1, 0, 8});
  EXPECT_EQ(out.str(), "step,gan,pixel,percep,seg,total\n3,0.5,0.25,1,0,8\n");
}

}  // namespace
