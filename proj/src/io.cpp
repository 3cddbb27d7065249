#include "dfs/io.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <vector>

#include "dfs/error.hpp"

namespace dfs::io {
namespace {

struct File {
  std::FILE* f = nullptr;
  ~File() {
    if (f) std::fclose(f);
  }
};

// Raw samples of one PNG, row-major interleaved, 16-bit values unpacked.
struct Decoded {
  PngInfo info;
  std::vector<std::uint16_t> samples;
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  longjmp(png_jmpbuf(png), 1);
}

void on_png_warning(png_structp, png_const_charp) {}

Decoded decode(const std::filesystem::path& path, bool header_only) {
  File file;
  file.f = std::fopen(path.c_str(), "rb");
  if (!file.f) throw LoadError("cannot open " + path.string());
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw LoadError("libpng initialization failed");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("not a readable PNG: " + path.string() + (message.empty() ? "" : " (" + message + ")"));
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.info.height = static_cast<int>(png_get_image_height(png, info));
  out.info.width = static_cast<int>(png_get_image_width(png, info));
  out.info.bit_depth = png_get_bit_depth(png, info);
  out.info.channels = png_get_channels(png, info);
  if (header_only) {
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * out.info.height);
  rows.resize(out.info.height);
  for (int y = 0; y < out.info.height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.info.height) * out.info.width * out.info.channels;
  out.samples.resize(n);
  if (out.info.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] << 8 | buffer[2 * i + 1]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

void encode(const std::filesystem::path& path, int height, int width, int channels, int bit_depth,
            const std::vector<std::uint16_t>& samples) {
  if (bit_depth != 8 && bit_depth != 16) throw ValidationError("PNG bit depth must be 8 or 16");
  if (channels != 1 && channels != 3) throw ValidationError("PNG output needs 1 or 3 channels");
  if (height < 1 || width < 1) throw ShapeError("cannot write an empty PNG");
  File file;
  file.f = std::fopen(path.c_str(), "wb");
  if (!file.f) throw Error("cannot write " + path.string());
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialization failed");
  }
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_byte> buffer(stride * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bit_depth == 16) {
      buffer[2 * i] = static_cast<png_byte>(samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(samples[i]);
    }
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encoding failed for " + path.string() + (message.empty() ? "" : " (" + message + ")"));
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, width, height, bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Decoded decode_gray(const std::filesystem::path& path, const char* role) {
  Decoded d = decode(path, false);
  if (d.info.channels != 1)
    throw ValidationError(std::string(role) + " PNG must be single channel: " + path.string() + " has " +
                          std::to_string(d.info.channels));
  return d;
}

}  // namespace

PngInfo png_info(const std::filesystem::path& path) { return decode(path, true).info; }

Image read_png(const std::filesystem::path& path) {
  const Decoded d = decode(path, false);
  Image img(d.info.height, d.info.width, d.info.channels);
  const double scale = d.info.bit_depth == 16 ? 65535.0 : 255.0;
  auto v = img.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = d.samples[i] / scale;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img, int bit_depth) {
  const double levels = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::uint16_t> s(img.size());
  const auto v = img.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0))
      throw ValidationError("pixel value " + std::to_string(v[i]) + " outside [0,1] for " + path.string());
    s[i] = static_cast<std::uint16_t>(std::lround(v[i] * levels));
  }
  encode(path, img.height(), img.width(), img.channels(), bit_depth, s);
}

SegLabelMap read_labels(const std::filesystem::path& path) {
  const Decoded d = decode_gray(path, "label");
  if (d.info.bit_depth != 8) throw ValidationError("label PNG must be 8-bit: " + path.string());
  SegLabelMap m(d.info.height, d.info.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = static_cast<std::uint8_t>(d.samples[i]);
  return m;
}

void write_labels(const std::filesystem::path& path, const SegLabelMap& labels) {
  encode(path, labels.height(), labels.width(), 1, 8, {labels.values().begin(), labels.values().end()});
}

InstanceMap read_instances(const std::filesystem::path& path) {
  const Decoded d = decode_gray(path, "instance");
  InstanceMap m(d.info.height, d.info.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = d.samples[i];
  return m;
}

void write_instances(const std::filesystem::path& path, const InstanceMap& instances) {
  encode(path, instances.height(), instances.width(), 1, 16, {instances.values().begin(), instances.values().end()});
}

haze::DepthMap read_depth(const std::filesystem::path& path, double dmin, double dmax) {
  if (!(dmax > dmin) || !std::isfinite(dmin) || !std::isfinite(dmax))
    throw ValidationError("depth range needs dmin < dmax");
  const Decoded d = decode_gray(path, "depth");
  if (d.info.bit_depth != 16) throw ValidationError("depth PNG must be 16-bit: " + path.string());
  haze::DepthMap m{Raster<double>(d.info.height, d.info.width)};
  for (std::size_t i = 0; i < m.meters.size(); ++i) m.meters.values()[i] = dmin + d.samples[i] / 65535.0 * (dmax - dmin);
  return m;
}

void write_depth(const std::filesystem::path& path, const haze::DepthMap& depth, double dmin, double dmax) {
  if (!(dmax > dmin)) throw ValidationError("depth range needs dmin < dmax");
  std::vector<std::uint16_t> s(depth.meters.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = (depth.meters.values()[i] - dmin) / (dmax - dmin);
    if (!(u >= 0.0 && u <= 1.0))
      throw ValidationError("depth " + std::to_string(depth.meters.values()[i]) + " outside the declared range [" +
                            std::to_string(dmin) + ", " + std::to_string(dmax) + "]");
    s[i] = static_cast<std::uint16_t>(std::lround(u * 65535.0));
  }
  encode(path, depth.height(), depth.width(), 1, 16, s);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::ostringstream o;
  for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return o.str();
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  return sha256_hex(bytes);
}

}  // namespace dfs::io
