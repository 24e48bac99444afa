#include "tempodet/detector/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "tempodet/config_io.hpp"
#include "tempodet/errors.hpp"

namespace tempodet::detector {

namespace {

constexpr char kMagic[8] = {'T', 'D', 'C', 'K', 'P', 'T', '\0', '\n'};

class Writer {
 public:
  explicit Writer(std::ofstream& f) : f_(f) {}
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f_.write(reinterpret_cast<const char*>(b), 4);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    f_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void floats(const float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, p + i, 4);
      u32(bits);
    }
  }

 private:
  std::ofstream& f_;
};

class Reader {
 public:
  Reader(std::ifstream& f, std::string source) : f_(f), source_(std::move(source)) {}
  std::uint32_t u32() {
    unsigned char b[4];
    if (!f_.read(reinterpret_cast<char*>(b), 4)) fail("truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::string str(std::uint32_t limit = 1u << 24) {
    const auto n = u32();
    if (n > limit) fail("implausible string length");
    std::string s(n, '\0');
    if (n && !f_.read(s.data(), n)) fail("truncated file");
    return s;
  }
  void floats(float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = u32();
      std::memcpy(p + i, &bits, 4);
    }
  }
  [[noreturn]] void fail(const std::string& msg) const { throw DataError(source_ + ": " + msg); }

 private:
  std::ifstream& f_;
  std::string source_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const std::string& metadata) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f.write(kMagic, sizeof kMagic);
    Writer w(f);
    w.u32(kCheckpointVersion);
    w.str(config::format_model_config(model.config()));
    w.str(metadata);
    const auto params = model.params();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
      w.str(p->name);
      w.u32(static_cast<std::uint32_t>(p->value.rank()));
      for (int d : p->value.shape()) w.u32(static_cast<std::uint32_t>(d));
      w.floats(p->value.data(), p->value.size());
    }
    if (!f) throw DataError("failed writing " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!f.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError(path.string() + ": not a checkpoint file");
  Reader r(f, path.string());
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  c.config = config::parse_model_config(r.str(), path.string() + " (model config)");
  c.metadata = r.str();
  const auto n = r.u32();
  if (n > 100000) r.fail("implausible tensor count");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str(4096);
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("tensor '" + name + "' has bad rank");
    numkit::Shape shape;
    std::size_t size = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.u32();
      if (d == 0 || d > (1u << 24)) r.fail("tensor '" + name + "' has a bad extent");
      shape.push_back(static_cast<int>(d));
      size *= d;
    }
    if (size > (1u << 28)) r.fail("tensor '" + name + "' is implausibly large");
    Tensor<float> t(shape);
    r.floats(t.data(), t.size());
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  return c;
}

Model<float> model_from_checkpoint(const Checkpoint& checkpoint) {
  Model<float> m = Model<float>::zeros(checkpoint.config);
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : checkpoint.tensors) by_name[name] = &t;
  for (auto* p : m.params()) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw DataError("checkpoint is missing parameter '" + p->name + "'");
    if (it->second->shape() != p->value.shape())
      throw DataError("checkpoint parameter '" + p->name + "' has shape " + numkit::shape_string(it->second->shape()) +
                      ", model expects " + numkit::shape_string(p->value.shape()));
    p->value = *it->second;
  }
  return m;
}

Model<float> load_model(const std::filesystem::path& path) { return model_from_checkpoint(read_checkpoint(path)); }

int warm_start(Model<float>& model, const Checkpoint& checkpoint) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : checkpoint.tensors) by_name[name] = &t;
  int copied = 0;
  for (auto* p : model.params()) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end() || it->second->shape() != p->value.shape()) continue;
    p->value = *it->second;
    ++copied;
  }
  return copied;
}

}  // namespace tempodet::detector
