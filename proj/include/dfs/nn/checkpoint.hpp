#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfs/nn/module.hpp"

// Single-file parameter archive:
//
//   "DFSCKPT\0" | u32 version | str kind | str spec echo | u32 count |
//   count x (str name | u8 dtype | 4 x u32 dims | payload) | u32 crc32
//
// Strings are u32 length + bytes, integers little endian, dtype 1 = f32 and
// 2 = f64. The trailing CRC-32 covers every preceding byte.
namespace dfs::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  bool f64 = false;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string kind;
  std::string spec;
  std::vector<StoredTensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws LoadError on missing file, bad magic, version or checksum mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint to_checkpoint(const Module<T>& module);

// Copies tensors into `module` by name. Kind must match; the spec echo is
// compared too unless `check_spec` is false. Every parameter must be present
// with an identical shape.
template <typename T>
void assign_checkpoint(const Checkpoint& ckpt, Module<T>& module, bool check_spec = true);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Module<T>& module) {
  write_checkpoint(path, to_checkpoint(module));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, Module<T>& module) {
  assign_checkpoint(read_checkpoint(path), module);
}

}  // namespace dfs::nn
