#include "dfs/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dfs/error.hpp"
#include "dfs/io.hpp"
#include "dfs/metrics.hpp"

namespace dfs::manifest {
namespace {

namespace fs = std::filesystem;

const char* const kColumns = "# id\tclean\tdepth\thazy\tlabels\tinstances\tbeta\tairlight";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw LoadError("bad " + what + " '" + s + "'");
  }
}

std::string field(const std::string& v) { return v.empty() ? "-" : v; }
std::string unfield(const std::string& v) { return v == "-" ? "" : v; }

std::string record_line(const Record& r) {
  std::string line = r.id + "\t" + field(r.clean) + "\t" + field(r.depth) + "\t" + field(r.hazy) + "\t" +
                     field(r.labels) + "\t" + field(r.instances) + "\t";
  if (r.haze) {
    line += num(r.haze->beta) + "\t" + num(r.haze->airlight[0]) + "," + num(r.haze->airlight[1]) + "," +
            num(r.haze->airlight[2]);
  } else {
    line += "-\t-";
  }
  return line;
}

std::string header_line(const DatasetManifest& m) {
  return "# name=" + m.name + "\tsplit=" + to_string(m.split) + "\tversion=" + std::to_string(m.version) +
         "\thash=" + m.hash + "\ttaxonomy=" + m.taxonomy + "\tdepth_min=" + num(m.depth_min) +
         "\tdepth_max=" + num(m.depth_max);
}

void prepare_dir(const fs::path& dir, bool force, const std::vector<std::string>& ours) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ValidationError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ValidationError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    for (const auto& name : ours) fs::remove_all(dir / name);
  }
  fs::create_directories(dir);
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
    default:
      return "segnet-train";
  }
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "segnet-train") return Split::segnet_train;
  throw ValidationError("unknown split '" + s + "' (expected train, val, test or segnet-train)");
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.source = path;
  m.base_dir = path.parent_path();
  std::string line;
  int lineno = 0;
  bool header = false;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        if (header) continue;  // column line or comment
        header = true;
        for (const auto& kv : split_on(line.substr(line.find_first_not_of("# ")), '\t')) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw LoadError("header entry '" + kv + "' is not key=value");
          const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
          if (k == "name") m.name = v;
          else if (k == "split") m.split = parse_split(v);
          else if (k == "version") m.version = static_cast<int>(parse_double(v, "version"));
          else if (k == "hash") m.hash = v;
          else if (k == "taxonomy") m.taxonomy = v;
          else if (k == "depth_min") m.depth_min = parse_double(v, "depth_min");
          else if (k == "depth_max") m.depth_max = parse_double(v, "depth_max");
          else throw LoadError("unknown header key '" + k + "'");
        }
        continue;
      }
      if (!header) throw LoadError("record before the '#' header");
      const auto f = split_on(line, '\t');
      if (f.size() != 8) throw LoadError("expected 8 tab-separated fields, got " + std::to_string(f.size()));
      Record r{f[0], unfield(f[1]), unfield(f[2]), unfield(f[3]), unfield(f[4]), unfield(f[5]), std::nullopt};
      if (r.id.empty() || r.clean.empty()) throw LoadError("record needs an id and a clean path");
      if ((f[6] == "-") != (f[7] == "-")) throw LoadError("beta and airlight must both be given or both be '-'");
      if (f[6] != "-") {
        haze::HazeParams p;
        p.beta = parse_double(f[6], "beta");
        const auto a = split_on(f[7], ',');
        if (a.size() == 1) {
          p.airlight.fill(parse_double(a[0], "airlight"));
        } else if (a.size() == 3) {
          for (int c = 0; c < 3; ++c) p.airlight[c] = parse_double(a[c], "airlight");
        } else {
          throw LoadError("airlight must be one value or r,g,b");
        }
        r.haze = p;
      }
      m.records.push_back(std::move(r));
    }
  } catch (const Error& e) {
    throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
  if (!header) throw LoadError(path.string() + ": missing '#' header");
  return m;
}

std::string content_hash(const DatasetManifest& m) {
  std::string text = "taxonomy=" + m.taxonomy + "\tdepth_min=" + num(m.depth_min) + "\tdepth_max=" + num(m.depth_max) + "\n";
  for (const auto& r : m.records) {
    text += record_line(r) + "\n";
    for (const std::string* p : {&r.clean, &r.depth, &r.hazy, &r.labels, &r.instances})
      if (!p->empty()) text += io::sha256_file(m.resolve(*p)) + "\n";
  }
  return io::sha256_hex(text);
}

void write_manifest(const fs::path& path, DatasetManifest& m) {
  m.base_dir = path.parent_path();
  m.source = path;
  m.hash = content_hash(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << header_line(m) << "\n" << kColumns << "\n";
  for (const auto& r : m.records) out << record_line(r) << "\n";
  if (!out) throw Error("failed writing manifest " + path.string());
}

std::string format_violation(const Violation& v) {
  return v.rule + "\t" + v.path + (v.detail.empty() ? "" : "\t" + v.detail);
}

std::vector<Violation> validate_manifests(const std::vector<DatasetManifest>& ms) {
  std::vector<Violation> out;
  // clean content hash -> (manifest index, record id)
  std::map<std::string, std::pair<std::size_t, std::string>> seen;
  for (std::size_t mi = 0; mi < ms.size(); ++mi) {
    const auto& m = ms[mi];
    const std::string where = m.source.empty() ? m.name : m.source.string();
    if (m.version != kFormatVersion)
      out.push_back({"VERSION", where, "version " + std::to_string(m.version) + ", tool reads " + std::to_string(kFormatVersion)});
    int n_classes = 0;
    try {
      n_classes = metrics::taxonomy_by_name(m.taxonomy).n_classes();
    } catch (const ConfigError& e) {
      out.push_back({"TAXONOMY", where, e.what()});
    }
    if (!(m.depth_max > m.depth_min)) out.push_back({"DEPTH_RANGE", where, "depth_min must be < depth_max"});

    bool all_present = true;
    std::set<std::string> ids;
    for (const auto& r : m.records) {
      if (!ids.insert(r.id).second) out.push_back({"DUPLICATE_ID", where, r.id});
      struct Entry {
        const std::string* rel;
        const char* rule;
      };
      const Entry entries[] = {{&r.clean, "CLEAN_MISSING"},   {&r.depth, "DEPTH_MISSING"},
                               {&r.hazy, "HAZY_MISSING"},     {&r.labels, "LABELS_MISSING"},
                               {&r.instances, "INSTANCES_MISSING"}};
      bool missing = false;
      for (const auto& e : entries)
        if (!e.rel->empty() && !fs::is_regular_file(m.resolve(*e.rel))) {
          out.push_back({e.rule, m.resolve(*e.rel).string(), "record " + r.id});
          missing = true;
        }
      all_present = all_present && !missing;
      if (r.hazy.empty() && (r.depth.empty() || !r.haze))
        out.push_back({"HAZE_UNDEFINED", where, "record " + r.id + " has no hazy image and no depth + haze parameters"});
      if (r.haze) {
        try {
          r.haze->validate();
        } catch (const ValidationError& e) {
          out.push_back({"PARAMS_INVALID", where, "record " + r.id + ": " + e.what()});
        }
      }
      if (missing) continue;

      io::PngInfo clean{};
      const auto clean_path = m.resolve(r.clean);
      try {
        clean = io::png_info(clean_path);
        const std::string h = io::sha256_file(clean_path);
        auto [it, fresh] = seen.emplace(h, std::make_pair(mi, r.id));
        if (!fresh && it->second.first != mi)
          out.push_back({"SPLIT_LEAK", clean_path.string(),
                         "record " + r.id + " of " + to_string(m.split) + " has the same clean image as record " +
                             it->second.second + " of " + to_string(ms[it->second.first].split)});
      } catch (const LoadError& e) {
        out.push_back({"UNREADABLE", clean_path.string(), e.what()});
        continue;
      }
      if (clean.channels != 3 || clean.bit_depth != 8)
        out.push_back({"BAD_FORMAT", clean_path.string(), "clean images must be 8-bit RGB"});

      auto check = [&](const std::string& rel, int channels, int bit_depth, const char* what) -> bool {
        if (rel.empty()) return false;
        const auto p = m.resolve(rel);
        io::PngInfo info{};
        try {
          info = io::png_info(p);
        } catch (const LoadError& e) {
          out.push_back({"UNREADABLE", p.string(), e.what()});
          return false;
        }
        if (info.channels != channels || (bit_depth && info.bit_depth != bit_depth))
          out.push_back({"BAD_FORMAT", p.string(),
                         std::string(what) + " must be " + (bit_depth ? std::to_string(bit_depth) + "-bit " : "") +
                             (channels == 1 ? "gray" : "RGB")});
        if (info.height != clean.height || info.width != clean.width) {
          out.push_back({"SHAPE_MISMATCH", p.string(),
                         std::to_string(info.width) + "x" + std::to_string(info.height) + " vs clean " +
                             std::to_string(clean.width) + "x" + std::to_string(clean.height)});
          return false;
        }
        return true;
      };
      check(r.depth, 1, 16, "depth");
      check(r.hazy, 3, 0, "hazy");
      check(r.instances, 1, 0, "instances");
      if (check(r.labels, 1, 8, "labels") && n_classes > 0) {
        try {
          const auto labels = io::read_labels(m.resolve(r.labels));
          int bad = 0, first = -1;
          for (auto v : labels.values())
            if (v != kIgnoreLabel && v >= n_classes) {
              ++bad;
              if (first < 0) first = v;
            }
          if (bad)
            out.push_back({"LABEL_RANGE", m.resolve(r.labels).string(),
                           std::to_string(bad) + " pixels outside [0," + std::to_string(n_classes - 1) +
                               "] (first value " + std::to_string(first) + ")"});
        } catch (const Error& e) {
          out.push_back({"UNREADABLE", m.resolve(r.labels).string(), e.what()});
        }
      }
    }
    if (all_present && !m.hash.empty()) {
      const std::string actual = content_hash(m);
      if (actual != m.hash) out.push_back({"HASH_MISMATCH", where, "declared " + m.hash + ", content " + actual});
    } else if (m.hash.empty()) {
      out.push_back({"HASH_MISSING", where, "no content hash in header"});
    }
  }
  return out;
}

std::vector<data::Scene> load_scenes(const DatasetManifest& m) {
  std::vector<data::Scene> out;
  for (const auto& r : m.records) {
    data::Scene s;
    s.id = r.id;
    s.clean = io::read_png(m.resolve(r.clean));
    if (s.clean.channels() != 3) throw ValidationError("clean image of " + r.id + " is not RGB");
    if (r.haze) s.haze = *r.haze;
    if (!r.depth.empty()) s.depth = io::read_depth(m.resolve(r.depth), m.depth_min, m.depth_max);
    if (!r.hazy.empty()) {
      s.hazy = io::read_png(m.resolve(r.hazy));
    } else if (!r.depth.empty() && r.haze) {
      s.hazy = haze::synthesize_haze(s.clean, haze::depth_to_transmission(s.depth, s.haze), s.haze);
    } else {
      throw ValidationError("record " + r.id + " has no hazy image and no depth + haze parameters");
    }
    if (!s.hazy.same_shape(s.clean)) throw ShapeError("hazy and clean images of " + r.id + " differ in shape");
    if (!r.labels.empty()) s.labels = io::read_labels(m.resolve(r.labels));
    if (!r.instances.empty()) s.instances = io::read_instances(m.resolve(r.instances));
    if ((s.labels.size() && (s.labels.height() != s.clean.height() || s.labels.width() != s.clean.width())) ||
        (s.instances.size() && (s.instances.height() != s.clean.height() || s.instances.width() != s.clean.width())))
      throw ShapeError("label rasters of " + r.id + " do not match the clean image");
    out.push_back(std::move(s));
  }
  return out;
}

BenchmarkManifests build_synthetic_benchmark(const fs::path& dir, int n, std::uint64_t seed, int n_segnet,
                                             bool force, const data::SyntheticOptions& opt) {
  const auto bench = data::synthetic_benchmark(n, seed, n_segnet, opt);
  prepare_dir(dir, force,
              {"clean", "depth", "hazy", "labels", "instances", "train.tsv", "val.tsv", "test.tsv", "segnet-train.tsv"});
  for (const char* sub : {"clean", "depth", "hazy", "labels", "instances"}) fs::create_directories(dir / sub);

  BenchmarkManifests out;
  out.dir = dir;
  auto emit = [&](const std::vector<data::Scene>& scenes, Split split, DatasetManifest& m) {
    m.name = "synthetic-" + std::to_string(seed);
    m.split = split;
    m.depth_min = 0;
    m.depth_max = opt.depth_max;
    for (const auto& s : scenes) {
      const std::string file = s.id + ".png";
      io::write_png(dir / "clean" / file, s.clean, 8);
      io::write_depth(dir / "depth" / file, s.depth, 0, opt.depth_max);
      // haze the rasters as stored so the files agree with each other
      const Image clean = io::read_png(dir / "clean" / file);
      const auto depth = io::read_depth(dir / "depth" / file, 0, opt.depth_max);
      io::write_png(dir / "hazy" / file,
                    haze::synthesize_haze(clean, haze::depth_to_transmission(depth, s.haze), s.haze), 16);
      io::write_labels(dir / "labels" / file, s.labels);
      io::write_instances(dir / "instances" / file, s.instances);
      m.records.push_back({s.id, "clean/" + file, "depth/" + file, "hazy/" + file, "labels/" + file,
                           "instances/" + file, s.haze});
    }
    write_manifest(dir / (to_string(split) + ".tsv"), m);
  };
  emit(bench.train, Split::train, out.train);
  emit(bench.val, Split::val, out.val);
  emit(bench.test, Split::test, out.test);
  emit(bench.segnet_train, Split::segnet_train, out.segnet_train);
  return out;
}

DatasetManifest synthesize_directory(const SynthesizeOptions& opt) {
  opt.params.validate();
  if (!fs::is_directory(opt.clean_dir)) throw ValidationError("clean directory " + opt.clean_dir.string() + " not found");
  if (!fs::is_directory(opt.depth_dir)) throw ValidationError("depth directory " + opt.depth_dir.string() + " not found");
  std::vector<fs::path> cleans;
  for (const auto& e : fs::directory_iterator(opt.clean_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") cleans.push_back(e.path());
  std::sort(cleans.begin(), cleans.end());
  if (cleans.empty()) throw ValidationError("no PNG files in " + opt.clean_dir.string());

  auto sibling = [](const fs::path& dir, const fs::path& clean) -> fs::path {
    if (dir.empty()) return {};
    const auto p = dir / clean.filename();
    return fs::is_regular_file(p) ? p : fs::path{};
  };
  for (const auto& c : cleans)
    if (sibling(opt.depth_dir, c).empty())
      throw ValidationError("DEPTH_MISSING: no depth map " + (opt.depth_dir / c.filename()).string());

  prepare_dir(opt.out_dir, opt.force, {"hazy", "manifest.tsv"});
  fs::create_directories(opt.out_dir / "hazy");
  const fs::path out_abs = fs::absolute(opt.out_dir);
  auto rel = [&](const fs::path& p) { return p.empty() ? std::string() : fs::relative(fs::absolute(p), out_abs).string(); };

  DatasetManifest m;
  m.name = opt.name;
  m.split = opt.split;
  m.taxonomy = opt.taxonomy;
  m.depth_min = opt.depth_min;
  m.depth_max = opt.depth_max;
  for (const auto& c : cleans) {
    const Image clean = io::read_png(c);
    if (clean.channels() != 3) throw ValidationError("clean image " + c.string() + " is not RGB");
    const auto depth_path = sibling(opt.depth_dir, c);
    const auto depth = io::read_depth(depth_path, opt.depth_min, opt.depth_max);
    const Image hazy = haze::synthesize_haze(clean, haze::depth_to_transmission(depth, opt.params), opt.params);
    const fs::path hazy_path = opt.out_dir / "hazy" / c.filename();
    io::write_png(hazy_path, hazy, 16);
    m.records.push_back({c.stem().string(), rel(c), rel(depth_path), rel(hazy_path), rel(sibling(opt.labels_dir, c)),
                         rel(sibling(opt.instances_dir, c)), opt.params});
  }
  write_manifest(opt.out_dir / "manifest.tsv", m);
  return m;
}

}  // namespace dfs::manifest
