#include "aeanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "aeanet/error.hpp"

namespace aeanet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'E', 'A', 'N'};
constexpr std::uint32_t kVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u64 = 2, bytes = 3 };

struct Entry {
  DType dtype = DType::f32;
  Shape shape;
  std::string raw;  // little-endian payload
};

template <typename V>
void put(std::string& out, V value) {
  char buf[sizeof(V)];
  std::memcpy(buf, &value, sizeof(V));
  out.append(buf, sizeof(V));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename V>
  V get() {
    V v;
    std::memcpy(&v, take(sizeof(V)).data(), sizeof(V));
    return v;
  }
  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw IoError("checkpoint " + origin_ + ": truncated at byte " + std::to_string(pos_));
    }
    std::string_view v(bytes_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

Entry tensor_entry(const Tensor<float>& t) {
  Entry e{DType::f32, t.shape(), {}};
  e.raw.assign(reinterpret_cast<const char*>(t.ptr()), t.numel() * sizeof(float));
  return e;
}

Entry u64_entry(std::uint64_t v) {
  Entry e{DType::u64, {1}, {}};
  put(e.raw, v);
  return e;
}

Entry bytes_entry(const std::string& s) { return {DType::bytes, {s.size()}, s}; }

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u64: return 8;
    case DType::bytes: return 1;
  }
  return 0;
}

const Entry& require(const std::map<std::string, Entry>& table, const std::string& name,
                     DType dtype, const std::string& origin) {
  auto it = table.find(name);
  if (it == table.end()) throw IoError("checkpoint " + origin + ": missing entry '" + name + "'");
  if (it->second.dtype != dtype) {
    throw IoError("checkpoint " + origin + ": entry '" + name + "' has unexpected dtype");
  }
  return it->second;
}

Tensor<float> to_tensor(const Entry& e) {
  std::vector<float> v(shape_numel(e.shape));
  std::memcpy(v.data(), e.raw.data(), e.raw.size());
  return Tensor<float>(e.shape, std::move(v));
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, Entry> table;
  for (const auto& [name, t] : ckpt.params) table["param/" + name] = tensor_entry(t);
  for (const auto& [name, t] : ckpt.adam_m) table["adam_m/" + name] = tensor_entry(t);
  for (const auto& [name, t] : ckpt.adam_v) table["adam_v/" + name] = tensor_entry(t);
  table["meta/step"] = u64_entry(ckpt.step);
  table["meta/config_hash"] = u64_entry(ckpt.config_hash());
  table["meta/config"] = bytes_entry(ckpt.config_text);
  table["meta/model"] = bytes_entry(ckpt.model.to_key_values().to_text());

  std::string out(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(table.size()));
  for (const auto& [name, e] : table) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put(out, static_cast<std::uint8_t>(e.dtype));
    put(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) put(out, static_cast<std::uint64_t>(d));
    out += e.raw;
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
  Reader in(bytes, origin);
  if (in.take(4) != std::string_view(kMagic, 4)) {
    throw IoError("checkpoint " + origin + ": bad magic (not an AEAN file)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) {
    throw IoError("checkpoint " + origin + ": unsupported version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  std::map<std::string, Entry> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(in.take(in.get<std::uint32_t>()));
    Entry e;
    const auto code = in.get<std::uint8_t>();
    if (code > 3) throw IoError("checkpoint " + origin + ": unknown dtype code " + std::to_string(code));
    e.dtype = static_cast<DType>(code);
    const auto rank = in.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(in.get<std::uint64_t>());
    e.raw = std::string(in.take(shape_numel(e.shape) * dtype_size(e.dtype)));
    table[name] = std::move(e);
  }
  if (!in.done()) throw IoError("checkpoint " + origin + ": trailing bytes");

  Checkpoint ckpt;
  ckpt.config_text = require(table, "meta/config", DType::bytes, origin).raw;
  ckpt.model = ModelConfig::from_key_values(
      KeyValues::parse(require(table, "meta/model", DType::bytes, origin).raw, origin));
  std::uint64_t hash = 0, step = 0;
  std::memcpy(&hash, require(table, "meta/config_hash", DType::u64, origin).raw.data(), 8);
  std::memcpy(&step, require(table, "meta/step", DType::u64, origin).raw.data(), 8);
  if (hash != ckpt.config_hash()) {
    throw IoError("checkpoint " + origin + ": config hash mismatch (file corrupted?)");
  }
  ckpt.step = step;
  for (const auto& [name, e] : table) {
    if (e.dtype != DType::f32) continue;
    const auto slash = name.find('/');
    const std::string group = name.substr(0, slash), key = name.substr(slash + 1);
    if (group == "param") ckpt.params.emplace(key, to_tensor(e));
    else if (group == "adam_m") ckpt.adam_m.emplace(key, to_tensor(e));
    else if (group == "adam_v") ckpt.adam_v.emplace(key, to_tensor(e));
  }
  // Validates names and shapes against the stored model configuration.
  Model<float> check(ckpt.model, ckpt.params);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str(), path.string());
}

}  // namespace aeanet
