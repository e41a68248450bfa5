#include "htl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "htl/error.hpp"
#include "htl/fileio.hpp"

namespace htl {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::string_view kMagic = "HTLCKPT1";

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put<std::uint64_t>(out, e);
  const auto values = t.values();
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void read_tensor_into(Reader& r, const std::map<std::string, Tensor*>& targets, std::map<std::string, bool>& seen) {
  const auto name_len = r.get<std::uint32_t>();
  if (name_len > 4096) throw CheckpointError("implausible parameter name length");
  const std::string name(r.take(name_len));
  const auto it = targets.find(name);
  if (it == targets.end()) throw CheckpointError("unknown parameter '" + name + "'");
  if (seen[name]) throw CheckpointError("duplicate parameter '" + name + "'");
  seen[name] = true;
  Tensor& t = *it->second;
  const auto rank = r.get<std::uint32_t>();
  if (rank != t.rank()) throw CheckpointError("parameter '" + name + "' has the wrong rank");
  for (std::size_t i = 0; i < rank; ++i)
    if (r.get<std::uint64_t>() != t.shape()[i]) throw CheckpointError("parameter '" + name + "' has the wrong shape");
  const auto raw = r.take(t.size() * sizeof(double));
  std::memcpy(t.values().data(), raw.data(), raw.size());
}

}  // namespace

std::string serialize_checkpoint(const Model& model, bool include_value_head) {
  const auto& c = model.config();
  std::string out(kMagic);
  for (int v : {c.n_layers, c.n_heads, c.d_model, c.d_ff, c.vocab_size, c.max_seq_len})
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  put<std::uint64_t>(out, c.seed);
  const auto trunk = model.named_parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(trunk.size()));
  for (const auto& [name, t] : trunk) put_tensor(out, name, *t);
  put<std::uint8_t>(out, include_value_head ? 1 : 0);
  if (include_value_head) {
    put_tensor(out, "value.weight", model.value_head().weight);
    put_tensor(out, "value.bias", model.value_head().bias);
  }
  put<std::uint32_t>(out, crc32_of(out));
  return out;
}

Model deserialize_checkpoint(std::string_view bytes, const std::optional<ModelConfig>& expected) {
  if (bytes.size() < kMagic.size() + 4) throw CheckpointError("checkpoint is truncated");
  if (bytes.substr(0, kMagic.size()) != kMagic) throw CheckpointError("not a checkpoint (bad magic)");
  const auto body = bytes.substr(0, bytes.size() - 4);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (stored != crc32_of(body)) throw CheckpointError("checkpoint checksum mismatch");

  Reader r(body);
  r.take(kMagic.size());
  ModelConfig c;
  c.n_layers = static_cast<int>(r.get<std::uint32_t>());
  c.n_heads = static_cast<int>(r.get<std::uint32_t>());
  c.d_model = static_cast<int>(r.get<std::uint32_t>());
  c.d_ff = static_cast<int>(r.get<std::uint32_t>());
  c.vocab_size = static_cast<int>(r.get<std::uint32_t>());
  c.max_seq_len = static_cast<int>(r.get<std::uint32_t>());
  c.seed = r.get<std::uint64_t>();
  if (expected) {
    auto want = *expected;
    want.seed = c.seed;  // the seed only matters at initialization
    if (!(want == c)) throw CheckpointError("checkpoint model config does not match the run config");
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint holds an invalid model config: ") + e.what());
  }
  Model model(c);
  std::map<std::string, Tensor*> targets;
  std::map<std::string, bool> seen;
  for (auto& [name, t] : model.named_parameters()) targets[name] = t;
  const auto count = r.get<std::uint32_t>();
  if (count != targets.size()) throw CheckpointError("checkpoint parameter count does not match the model");
  for (std::uint32_t i = 0; i < count; ++i) read_tensor_into(r, targets, seen);
  const auto has_value = r.get<std::uint8_t>();
  if (has_value > 1) throw CheckpointError("bad value-head flag");
  if (has_value) {
    const std::map<std::string, Tensor*> value_targets{{"value.weight", &model.value_head().weight},
                                                       {"value.bias", &model.value_head().bias}};
    read_tensor_into(r, value_targets, seen);
    read_tensor_into(r, value_targets, seen);
  }
  if (r.position() != body.size()) throw CheckpointError("trailing bytes after the checkpoint payload");
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, bool include_value_head) {
  write_file_atomic(path, serialize_checkpoint(model, include_value_head));
}

Model load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw CheckpointError(e.what());
  }
  try {
    return deserialize_checkpoint(bytes, expected);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace htl
