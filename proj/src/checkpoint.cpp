#include "curvlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "curvlab/error.hpp"

namespace curvlab {
namespace {

constexpr char kMagic[8] = {'C', 'U', 'R', 'V', 'L', 'A', 'B', '\0'};
constexpr std::uint32_t kVersion = 1;

enum LayerTag : std::uint8_t {
  kAffineTag = 1,
  kReluTag = 2,
  kConv2dTag = 3,
  kMaxPool2dTag = 4,
  kFlattenTag = 5,
};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  bool ok() const { return static_cast<bool>(out_); }

 private:
  template <class T>
  void put_le(T v) {
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(buf, sizeof(T));
  }
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError("checkpoint " + path_.string() + ": unexpected end of file at byte " +
                    std::to_string(offset_ + in_.gcount()));
    offset_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::uint64_t offset() const { return offset_; }
  bool at_eof() {
    in_.peek();
    return in_.eof();
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  template <class T>
  T get_le() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }
  std::ifstream in_;
  std::filesystem::path path_;
  std::uint64_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kMagic, 8);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const LayerSpec& l : net.layers()) {
    if (const auto* a = std::get_if<AffineLayer>(&l)) {
      w.u8(kAffineTag);
      w.u32(a->in);
      w.u32(a->out);
    } else if (std::get_if<ReluLayer>(&l)) {
      w.u8(kReluTag);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&l)) {
      w.u8(kConv2dTag);
      w.u32(c->in_c);
      w.u32(c->out_c);
      w.u32(c->kernel);
      w.u32(c->in_h);
      w.u32(c->in_w);
    } else if (const auto* p = std::get_if<MaxPool2dLayer>(&l)) {
      w.u8(kMaxPool2dTag);
      w.u32(p->window);
    } else {
      w.u8(kFlattenTag);
    }
  }
  for (const std::string& name : net.param_names()) {
    const Tensor& t = net.param(name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u64(static_cast<std::uint64_t>(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i) w.f64(t[i]);
  }
  w.u64(net.init_seed());
  w.u32(static_cast<std::uint32_t>(net.epoch()));
  if (!w.ok()) throw IoError("write failed for " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint " + path.string() + ": bad magic, not a checkpoint file");
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError("checkpoint " + path.string() + ": unsupported format version " +
                  std::to_string(version));

  std::uint32_t n_layers = r.u32();
  if (n_layers > 1024)
    throw IoError("checkpoint " + path.string() + ": implausible layer count " +
                  std::to_string(n_layers));
  std::vector<LayerSpec> layers;
  layers.reserve(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    std::uint8_t tag = r.u8();
    switch (tag) {
      case kAffineTag: {
        int in = static_cast<int>(r.u32());
        int out = static_cast<int>(r.u32());
        layers.push_back(AffineLayer{in, out});
        break;
      }
      case kReluTag:
        layers.push_back(ReluLayer{});
        break;
      case kConv2dTag: {
        Conv2dLayer c;
        c.in_c = static_cast<int>(r.u32());
        c.out_c = static_cast<int>(r.u32());
        c.kernel = static_cast<int>(r.u32());
        c.in_h = static_cast<int>(r.u32());
        c.in_w = static_cast<int>(r.u32());
        layers.push_back(c);
        break;
      }
      case kMaxPool2dTag:
        layers.push_back(MaxPool2dLayer{static_cast<int>(r.u32())});
        break;
      case kFlattenTag:
        layers.push_back(FlattenLayer{});
        break;
      default:
        throw IoError("checkpoint " + path.string() + ": unknown layer tag " +
                      std::to_string(tag) + " at byte " + std::to_string(r.offset() - 1));
    }
  }

  std::map<std::string, Tensor> params;
  // Parameter shapes are dictated by the layer list; the file stores flat
  // value runs keyed by name.
  std::vector<std::pair<std::string, std::vector<int>>> expected;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::string prefix = "L" + std::to_string(i);
    if (const auto* a = std::get_if<AffineLayer>(&layers[i])) {
      expected.emplace_back(prefix + ".W", std::vector<int>{a->out, a->in});
      expected.emplace_back(prefix + ".b", std::vector<int>{a->out});
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layers[i])) {
      expected.emplace_back(prefix + ".W", std::vector<int>{c->out_c, c->in_c, c->kernel, c->kernel});
      expected.emplace_back(prefix + ".b", std::vector<int>{c->out_c});
    }
  }
  for (const auto& [want_name, shape] : expected) {
    std::uint16_t len = r.u16();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    if (name != want_name)
      throw IoError("checkpoint " + path.string() + ": expected parameter " + want_name +
                    ", found " + name);
    std::uint64_t count = r.u64();
    std::size_t want = 1;
    for (int d : shape) want *= static_cast<std::size_t>(d);
    if (count != want)
      throw IoError("checkpoint " + path.string() + ": parameter " + name + " has " +
                    std::to_string(count) + " values, layer list implies " + std::to_string(want));
    std::vector<double> data(count);
    for (auto& v : data) v = r.f64();
    params.emplace(name, Tensor(shape, std::move(data)));
  }

  std::uint64_t seed = r.u64();
  int epoch = static_cast<int>(r.u32());
  if (!r.at_eof())
    throw IoError("checkpoint " + path.string() + ": trailing bytes after byte " +
                  std::to_string(r.offset()));
  return Network(std::move(layers), std::move(params), seed, epoch);
}

}  // namespace curvlab
