#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfs/dataset.hpp"
#include "dfs/haze.hpp"

// Dataset manifests: the only route by which image files enter a run.
//
// File layout, tab separated:
//
//   # name=<n>	split=<s>	version=1	hash=<sha256>	taxonomy=<t>	depth_min=<f>	depth_max=<f>
//   # id	clean	depth	hazy	labels	instances	beta	airlight
//   <record lines>
//
// Paths are relative to the manifest's directory. Absent fields are "-";
// airlight is "r,g,b".
namespace dfs::manifest {

inline constexpr int kFormatVersion = 1;

enum class Split { train, val, test, segnet_train };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct Record {
  std::string id;
  std::string clean;
  std::string depth;  // empty when absent
  std::string hazy;
  std::string labels;
  std::string instances;
  std::optional<haze::HazeParams> haze;
};

struct DatasetManifest {
  std::string name;
  Split split = Split::train;
  int version = kFormatVersion;
  std::string hash;  // as declared in the header
  std::string taxonomy = "synthetic";
  double depth_min = 0;
  double depth_max = 10;
  std::vector<Record> records;
  std::filesystem::path base_dir;  // directory of the manifest file
  std::filesystem::path source;    // manifest file, empty if never read or written

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
};

// Throws LoadError on unreadable or malformed files (line number in message).
DatasetManifest read_manifest(const std::filesystem::path& path);
// Recomputes the hash, stores it in `m` and writes the file.
void write_manifest(const std::filesystem::path& path, DatasetManifest& m);

// SHA-256 over every record's fields and the bytes of every listed file.
// Throws LoadError when a listed file is missing.
std::string content_hash(const DatasetManifest& m);

struct Violation {
  std::string rule;  // CLEAN_MISSING, DEPTH_MISSING, SHAPE_MISMATCH, SPLIT_LEAK, ...
  std::string path;
  std::string detail;
};

// Checks file existence, decodability, pixel formats, shape agreement,
// label ranges, haze parameters, duplicate ids, the declared hash and
// pairwise disjointness (by clean-image content) across the given manifests.
std::vector<Violation> validate_manifests(const std::vector<DatasetManifest>& ms);

std::string format_violation(const Violation& v);

// Loads every record as a scene. A record without a hazy file is hazed from
// its depth and parameters; one with neither is a ValidationError.
std::vector<data::Scene> load_scenes(const DatasetManifest& m);

struct BenchmarkManifests {
  DatasetManifest train, val, test, segnet_train;
  std::filesystem::path dir;
};

// Writes the procedural benchmark (PNG rasters plus train/val/test/segnet-train
// manifests) under `dir`. An existing non-empty `dir` is a ValidationError
// unless `force`, which replaces only the files this function writes.
BenchmarkManifests build_synthetic_benchmark(const std::filesystem::path& dir, int n, std::uint64_t seed,
                                             int n_segnet, bool force,
                                             const data::SyntheticOptions& opt = {});

struct SynthesizeOptions {
  std::filesystem::path clean_dir, depth_dir, out_dir;
  std::filesystem::path labels_dir, instances_dir;  // optional, matched by file stem
  haze::HazeParams params;
  double depth_min = 0, depth_max = 10;
  Split split = Split::test;
  std::string name = "synthesized";
  std::string taxonomy = "synthetic";
  bool force = false;
};

// Hazes every clean PNG with the same-stem depth PNG and writes 16-bit hazy
// PNGs plus <out_dir>/manifest.tsv. Returns the written manifest.
DatasetManifest synthesize_directory(const SynthesizeOptions& opt);

}  // namespace dfs::manifest
