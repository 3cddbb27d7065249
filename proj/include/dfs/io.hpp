#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "dfs/haze.hpp"
#include "dfs/image.hpp"

// PNG rasters and file hashing. All readers throw LoadError on unreadable
// files and ValidationError when the pixel format does not fit the role.
namespace dfs::io {

struct PngInfo {
  int height = 0;
  int width = 0;
  int channels = 0;  // after palette expansion, alpha stripped
  int bit_depth = 0;  // 8 or 16
};

PngInfo png_info(const std::filesystem::path& path);

// Gray or RGB, 8 or 16 bit, scaled to [0,1]. Palette images are expanded and
// alpha is dropped.
Image read_png(const std::filesystem::path& path);
// Quantizes with rounding; values outside [0,1] are a ValidationError.
void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 8);

// 8-bit gray class ids.
SegLabelMap read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const SegLabelMap& labels);

// 16-bit gray instance ids (8-bit accepted on read).
InstanceMap read_instances(const std::filesystem::path& path);
void write_instances(const std::filesystem::path& path, const InstanceMap& instances);

// 16-bit gray, code v maps linearly to dmin + v/65535 * (dmax - dmin).
haze::DepthMap read_depth(const std::filesystem::path& path, double dmin, double dmax);
void write_depth(const std::filesystem::path& path, const haze::DepthMap& depth, double dmin, double dmax);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dfs::io
