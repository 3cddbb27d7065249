#include "dfs/nn/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "dfs/error.hpp"

namespace dfs::nn {
namespace {

constexpr char kMagic[8] = {'D', 'F', 'S', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16),
                         std::uint8_t(v >> 24)};
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& buf, std::size_t end, std::string path)
      : buf_(buf), end_(end), path_(std::move(path)) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > end_) throw LoadError("truncated checkpoint " + path_);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
  }
  std::uint64_t u64() {
    std::uint64_t lo = u32();
    return lo | static_cast<std::uint64_t>(u32()) << 32;
  }
  std::string str() {
    std::string s(u32(), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string path_;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(ckpt.version);
  w.str(ckpt.kind);
  w.str(ckpt.spec);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.values.size() != t.shape.numel())
      throw ShapeError("checkpoint tensor " + t.name + " has inconsistent size");
    w.str(t.name);
    std::uint8_t dtype = t.f64 ? 2 : 1;
    w.bytes(&dtype, 1);
    for (int d : {t.shape.n, t.shape.c, t.shape.h, t.shape.w}) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.values) {
      if (t.f64) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        w.u64(bits);
      } else {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        w.u32(bits);
      }
    }
  }
  auto& buf = w.buffer();
  w.u32(crc_of(buf.data(), buf.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("checkpoint not found: " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 8 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw LoadError("not a checkpoint file: " + path.string());
  const std::size_t body = buf.size() - 4;
  const std::uint32_t stored = std::uint32_t(buf[body]) | std::uint32_t(buf[body + 1]) << 8 |
                               std::uint32_t(buf[body + 2]) << 16 | std::uint32_t(buf[body + 3]) << 24;
  if (stored != crc_of(buf.data(), body))
    throw LoadError("checkpoint checksum mismatch: " + path.string());

  Reader r(buf, body, path.string());
  char magic[8];
  r.bytes(magic, 8);
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion)
    throw LoadError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " +
                    path.string());
  ckpt.kind = r.str();
  ckpt.spec = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.str();
    std::uint8_t dtype;
    r.bytes(&dtype, 1);
    if (dtype != 1 && dtype != 2) throw LoadError("unknown dtype in " + path.string());
    t.f64 = dtype == 2;
    t.shape.n = static_cast<int>(r.u32());
    t.shape.c = static_cast<int>(r.u32());
    t.shape.h = static_cast<int>(r.u32());
    t.shape.w = static_cast<int>(r.u32());
    t.values.resize(t.shape.numel());
    for (double& v : t.values) {
      if (t.f64) {
        std::uint64_t bits = r.u64();
        std::memcpy(&v, &bits, 8);
      } else {
        std::uint32_t bits = r.u32();
        float f;
        std::memcpy(&f, &bits, 4);
        v = f;
      }
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw LoadError("trailing bytes in checkpoint " + path.string());
  return ckpt;
}

template <typename T>
Checkpoint to_checkpoint(const Module<T>& module) {
  Checkpoint ckpt;
  ckpt.kind = module.kind();
  ckpt.spec = module.spec_echo();
  for (const auto& p : module.parameters()) {
    StoredTensor t;
    t.name = p.name;
    t.shape = p.var.shape();
    t.f64 = sizeof(T) == 8;
    t.values.assign(p.var.value().values().begin(), p.var.value().values().end());
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

template <typename T>
void assign_checkpoint(const Checkpoint& ckpt, Module<T>& module, bool check_spec) {
  if (ckpt.kind != module.kind())
    throw LoadError("checkpoint holds a '" + ckpt.kind + "', expected '" + module.kind() + "'");
  if (check_spec && ckpt.spec != module.spec_echo())
    throw LoadError("checkpoint spec does not match network spec:\n" + ckpt.spec + "\nvs\n" +
                    module.spec_echo());
  for (const auto& p : module.parameters()) {
    const StoredTensor* found = nullptr;
    for (const auto& t : ckpt.tensors)
      if (t.name == p.name) found = &t;
    if (!found) throw LoadError("checkpoint lacks tensor '" + p.name + "'");
    if (!(found->shape == p.var.shape()))
      throw LoadError("tensor '" + p.name + "' has shape " + found->shape.str() + ", expected " +
                      p.var.shape().str());
    Var<T> v = p.var;
    auto dst = v.mutable_value().values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(found->values[i]);
  }
}

template Checkpoint to_checkpoint<float>(const Module<float>&);
template Checkpoint to_checkpoint<double>(const Module<double>&);
template void assign_checkpoint<float>(const Checkpoint&, Module<float>&, bool);
template void assign_checkpoint<double>(const Checkpoint&, Module<double>&, bool);

}  // namespace dfs::nn
