#include "oneshot/oswt.h"

#include <bit>
#include <fstream>
#include <sstream>

#include "oneshot/error.h"

namespace oneshot::io {

namespace {

constexpr char kMagic[4] = {'O', 'S', 'W', 'T'};
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_tensor(std::string &out, const nn::Tensor &t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
 public:
  Reader(const std::string &bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  nn::Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank > kMaxRank) fail("tensor rank " + std::to_string(rank) + " too large");
    nn::Shape shape(rank);
    std::size_t count = 1;
    for (auto &d : shape) {
      d = u32();
      count *= d;
    }
    need(count * 4);
    std::vector<double> data(count);
    for (auto &v : data) v = std::bit_cast<float>(u32());
    return nn::Tensor(std::move(shape), std::move(data));
  }

  bool at_end() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string &why) const {
    throw DataError(origin_ + ": malformed OSWT container (" + why + " at byte " +
                    std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated");
  }

  const std::string &bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

const char *layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv1d: return "conv1d";
    case LayerKind::kDense: return "dense";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

const nn::Tensor *Container::find(const std::string &name) const {
  for (const auto &[key, tensor] : named)
    if (key == name) return &tensor;
  return nullptr;
}

const nn::Tensor &Container::get(const std::string &name) const {
  if (const auto *t = find(name)) return *t;
  throw DataError("OSWT container has no tensor named '" + name + "'");
}

void Container::put(const std::string &name, nn::Tensor tensor) {
  for (auto &[key, existing] : named)
    if (key == name) {
      existing = std::move(tensor);
      return;
    }
  named.emplace_back(name, std::move(tensor));
}

std::string serialize(const Container &container) {
  std::string out(kMagic, 4);
  put_u32(out, kOswtVersion);
  put_u32(out, static_cast<std::uint32_t>(container.layers.size()));
  for (const auto &layer : container.layers) {
    put_u32(out, static_cast<std::uint32_t>(layer.kind));
    put_u32(out, layer.attribute);
    put_u32(out, static_cast<std::uint32_t>(layer.tensors.size()));
    for (const auto &t : layer.tensors) put_tensor(out, t);
  }
  put_u32(out, static_cast<std::uint32_t>(container.named.size()));
  for (const auto &[name, tensor] : container.named) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_tensor(out, tensor);
  }
  return out;
}

Container deserialize(const std::string &bytes, const std::string &origin) {
  Reader in(bytes, origin);
  if (in.text(4) != std::string(kMagic, 4)) in.fail("bad magic");
  if (const auto version = in.u32(); version != kOswtVersion)
    in.fail("unsupported version " + std::to_string(version));

  Container c;
  const std::uint32_t layer_count = in.u32();
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerRecord layer;
    const std::uint32_t kind = in.u32();
    if (kind < 1 || kind > 4) in.fail("unknown layer kind " + std::to_string(kind));
    layer.kind = static_cast<LayerKind>(kind);
    layer.attribute = in.u32();
    const std::uint32_t tensors = in.u32();
    for (std::uint32_t t = 0; t < tensors; ++t) layer.tensors.push_back(in.tensor());
    c.layers.push_back(std::move(layer));
  }
  const std::uint32_t named = in.u32();
  for (std::uint32_t i = 0; i < named; ++i) {
    const std::uint32_t len = in.u32();
    std::string name = in.text(len);
    c.named.emplace_back(std::move(name), in.tensor());
  }
  if (!in.at_end()) in.fail("trailing bytes");
  return c;
}

void write_oswt(const std::filesystem::path &path, const Container &container) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    const std::string bytes = serialize(container);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Container read_oswt(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), path.string());
}

}  // namespace oneshot::io
