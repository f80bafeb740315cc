#include "marscost/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <vector>

#include "marscost/raster_io.hpp"

namespace marscost {
namespace {

constexpr char kMagic[8] = {'M', 'A', 'R', 'S', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ModelParams& params) {
  params.validate();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.max_points_per_pillar));
  const auto tensors = params.named_tensors();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->shape.size()));
    for (std::size_t d : t->shape) put<std::uint64_t>(out, d);
    for (double v : t->data) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ModelParams decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw FormatError("checkpoint: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto max_points = in.get<std::uint32_t>();
  const auto count = in.get<std::uint32_t>();

  std::map<std::string, Tensor> found;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>();
    if (name_len > 256) throw FormatError("checkpoint: tensor name too long");
    std::string name = in.take(name_len);
    const auto ndim = in.get<std::uint32_t>();
    if (ndim > 8) throw FormatError("checkpoint: too many dimensions in '" + name + "'");
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) {
      const auto v = in.get<std::uint64_t>();
      if (v == 0 || v > (1ULL << 24)) throw FormatError("checkpoint: bad dimension in '" + name + "'");
      d = static_cast<std::size_t>(v);
    }
    Tensor t(shape);
    if (t.size() > (1ULL << 26)) throw FormatError("checkpoint: tensor '" + name + "' too large");
    for (double& v : t.data) v = std::bit_cast<double>(in.get<std::uint64_t>());
    if (!found.emplace(std::move(name), std::move(t)).second) throw FormatError("checkpoint: duplicate tensor");
  }
  if (!in.done()) throw FormatError("checkpoint: trailing bytes");

  auto dim = [&](const char* name, std::size_t axis) -> int {
    auto it = found.find(name);
    if (it == found.end()) throw FormatError(std::string("checkpoint: missing tensor '") + name + "'");
    if (axis >= it->second.shape.size()) throw FormatError(std::string("checkpoint: bad rank for '") + name + "'");
    return static_cast<int>(it->second.shape[axis]);
  };
  ModelConfig cfg;
  cfg.pillar_channels = dim("pillar.weight", 1);
  cfg.stage3_channels = dim("stage3.weight", 3);
  cfg.stage4_channels = dim("stage4.weight", 3);
  cfg.film_hidden = dim("film3.hidden.weight", 1);
  cfg.head_channels = dim("head.weight", 3);
  cfg.max_points_per_pillar = static_cast<int>(max_points);

  ModelParams params(cfg);
  auto slots = params.named_tensors();
  if (slots.size() != found.size()) throw FormatError("checkpoint: unexpected tensor set");
  for (auto& [name, t] : slots) {
    auto it = found.find(name);
    if (it == found.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape != t->shape) throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    *t = std::move(it->second);
  }
  try {
    params.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace marscost
