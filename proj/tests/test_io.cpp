#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "dfs/error.hpp"
#include "dfs/io.hpp"
#include "support/fixtures.hpp"
#include "support/tempdir.hpp"

namespace dfs {
namespace {

using testing::TempDir;

Image quantized(int h, int w, int c, int levels, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> q(0, levels);
  Image img(h, w, c);
  for (double& v : img.values()) v = q(rng) / static_cast<double>(levels);
  return img;
}

TEST(Png, EightAndSixteenBitRoundTripsAreExact) {
  TempDir dir("io");
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 9), w = 1 + static_cast<int>(rng() % 9);
    const int c = trial % 2 ? 3 : 1;
    const Image a = quantized(h, w, c, 255, rng);
    io::write_png(dir / "a.png", a, 8);
    EXPECT_EQ(io::read_png(dir / "a.png"), a);
    const auto info = io::png_info(dir / "a.png");
    EXPECT_EQ(info.height, h);
    EXPECT_EQ(info.width, w);
    EXPECT_EQ(info.channels, c);
    EXPECT_EQ(info.bit_depth, 8);

    const Image b = quantized(h, w, c, 65535, rng);
    io::write_png(dir / "b.png", b, 16);
    EXPECT_EQ(io::read_png(dir / "b.png"), b);
    EXPECT_EQ(io::png_info(dir / "b.png").bit_depth, 16);
  }
}

TEST(Png, WriteRoundsToNearestCode) {
  TempDir dir("io");
  Image img(1, 3, 1);
  img.at(0, 0, 0) = 0.4 / 255;
  img.at(0, 1, 0) = 0.6 / 255;
  img.at(0, 2, 0) = 1.0;
  io::write_png(dir / "r.png", img, 8);
  const Image back = io::read_png(dir / "r.png");
  EXPECT_EQ(back.at(0, 0, 0), 0.0);
  EXPECT_EQ(back.at(0, 1, 0), 1.0 / 255);
  EXPECT_EQ(back.at(0, 2, 0), 1.0);
}

TEST(Png, RejectsOutOfRangeValuesAndBadFiles) {
  TempDir dir("io");
  Image img(2, 2, 3, 0.5);
  img.at(1, 1, 2) = 1.5;
  EXPECT_THROW(io::write_png(dir / "x.png", img), ValidationError);
  img.at(1, 1, 2) = std::nan("");
  EXPECT_THROW(io::write_png(dir / "x.png", img), ValidationError);
  EXPECT_THROW(io::read_png(dir / "missing.png"), LoadError);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(io::read_png(dir / "junk.png"), LoadError);
  EXPECT_THROW(io::png_info(dir / "junk.png"), LoadError);
}

TEST(Labels, RoundTripAndFormatChecks) {
  TempDir dir("io");
  std::mt19937_64 rng(5);
  const SegLabelMap labels = testing::random_labels(7, 5, 19, rng, 0.2);
  io::write_labels(dir / "l.png", labels);
  EXPECT_EQ(io::read_labels(dir / "l.png"), labels);

  InstanceMap inst(4, 6);
  for (std::size_t i = 0; i < inst.size(); ++i) inst.values()[i] = static_cast<std::uint16_t>(i * 2731);
  io::write_instances(dir / "i.png", inst);
  EXPECT_EQ(io::read_instances(dir / "i.png"), inst);
  EXPECT_EQ(io::png_info(dir / "i.png").bit_depth, 16);

  // an RGB image is not a label map
  io::write_png(dir / "rgb.png", Image(3, 3, 3, 0.2));
  EXPECT_THROW(io::read_labels(dir / "rgb.png"), ValidationError);
}

TEST(Depth, CodesMapLinearlyOntoTheRange) {
  TempDir dir("io");
  haze::DepthMap d{Raster<double>(2, 3)};
  const double dmin = 1, dmax = 11;
  const int codes[] = {0, 1, 100, 32768, 65534, 65535};
  for (int i = 0; i < 6; ++i) d.meters.values()[i] = dmin + codes[i] / 65535.0 * (dmax - dmin);
  io::write_depth(dir / "d.png", d, dmin, dmax);
  const auto back = io::read_depth(dir / "d.png", dmin, dmax);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(back.meters.values()[i], d.meters.values()[i]) << codes[i];

  d.meters.values()[0] = dmax + 0.5;
  EXPECT_THROW(io::write_depth(dir / "d.png", d, dmin, dmax), ValidationError);
}

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(io::sha256_hex(std::string()), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(io::sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir dir("io");
  std::ofstream(dir / "abc.txt", std::ios::binary) << "abc";
  EXPECT_EQ(io::sha256_file(dir / "abc.txt"), io::sha256_hex(std::string("abc")));
  EXPECT_THROW(io::sha256_file(dir / "nope"), LoadError);
}

}  // namespace
}  // namespace dfs
