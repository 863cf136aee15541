#include "asymcodec/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <functional>
#include <map>
#include <set>

namespace asymcodec {

namespace {

constexpr char kMagic[4] = {'A', 'L', 'C', '1'};
constexpr std::uint8_t kMaxRank = 8;

struct ConfigField {
  const char* key;
  std::function<double(const ModelConfig&)> get;
  std::function<void(ModelConfig&, long)> set;
};

// Every configuration value is an integer; enums and booleans store their
// ordinal.
const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields{
      {"config.n_latent", [](const ModelConfig& c) { return c.n_latent; }, [](ModelConfig& c, long v) { c.n_latent = v; }},
      {"config.n_hyper", [](const ModelConfig& c) { return c.n_hyper; }, [](ModelConfig& c, long v) { c.n_hyper = v; }},
      {"config.k_mixture", [](const ModelConfig& c) { return c.k_mixture; },
       [](ModelConfig& c, long v) { c.k_mixture = v; }},
      {"config.encoder_msrb_stages", [](const ModelConfig& c) { return c.encoder_msrb_stages; },
       [](ModelConfig& c, long v) { c.encoder_msrb_stages = static_cast<int>(v); }},
      {"config.decoder_msrb_stages", [](const ModelConfig& c) { return c.decoder_msrb_stages; },
       [](ModelConfig& c, long v) { c.decoder_msrb_stages = static_cast<int>(v); }},
      {"config.base_width", [](const ModelConfig& c) { return c.base_width; },
       [](ModelConfig& c, long v) { c.base_width = v; }},
      {"config.attention_enabled", [](const ModelConfig& c) { return c.attention_enabled ? 1 : 0; },
       [](ModelConfig& c, long v) { c.attention_enabled = v != 0; }},
      {"config.block_kind", [](const ModelConfig& c) { return static_cast<int>(c.block_kind); },
       [](ModelConfig& c, long v) {
         if (v < 0 || v > 3) throw CheckpointError("checkpoint: unknown block kind " + std::to_string(v));
         c.block_kind = static_cast<BlockKind>(v);
       }},
      {"config.branch_kernel_a", [](const ModelConfig& c) { return c.branch_kernels[0]; },
       [](ModelConfig& c, long v) { c.branch_kernels[0] = static_cast<int>(v); }},
      {"config.branch_kernel_b", [](const ModelConfig& c) { return c.branch_kernels[1]; },
       [](ModelConfig& c, long v) { c.branch_kernels[1] = static_cast<int>(v); }},
      {"config.crb_depth", [](const ModelConfig& c) { return c.crb_depth; },
       [](ModelConfig& c, long v) { c.crb_depth = static_cast<int>(v); }},
      {"config.importance", [](const ModelConfig& c) { return static_cast<int>(c.importance); },
       [](ModelConfig& c, long v) {
         if (v < 0 || v > 2) throw CheckpointError("checkpoint: unknown importance mode " + std::to_string(v));
         c.importance = static_cast<ImportanceMode>(v);
       }},
      {"config.pqf_enabled", [](const ModelConfig& c) { return c.pqf_enabled ? 1 : 0; },
       [](ModelConfig& c, long v) { c.pqf_enabled = v != 0; }},
  };
  return fields;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_float(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void put_string(const std::string& s) {
    if (s.size() > 0xFFFF) throw CheckpointError("checkpoint: name too long: " + s.substr(0, 40) + "...");
    put(static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void put_entry(const CheckpointEntry& e) {
    put_string(e.name);
    if (e.dims.size() > kMaxRank) throw CheckpointError("checkpoint: rank too large for '" + e.name + "'");
    put(static_cast<std::uint8_t>(e.dims.size()));
    std::size_t count = 1;
    for (auto d : e.dims) {
      put(d);
      count *= d;
    }
    if (count != e.data.size()) throw CheckpointError("checkpoint: data size mismatch for '" + e.name + "'");
    for (float f : e.data) put_float(f);
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n, "tensor name");
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_), data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(kCheckpointVersion);
  const auto& fields = config_fields();
  w.put(static_cast<std::uint32_t>(fields.size() + ckpt.tensors.size()));
  for (const auto& f : fields) w.put_entry({f.key, {}, {static_cast<float>(f.get(ckpt.config))}});
  for (const auto& e : ckpt.tensors) w.put_entry(e);
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char c : kMagic) {
    if (r.get<std::uint8_t>("magic") != static_cast<std::uint8_t>(c)) throw CheckpointError("not an ALC1 checkpoint");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("entry count");

  std::map<std::string, const ConfigField*> by_key;
  for (const auto& f : config_fields()) by_key[f.key] = &f;
  std::set<std::string> seen;
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.get_string(r.get<std::uint16_t>("name length"));
    if (!seen.insert(e.name).second) throw CheckpointError("checkpoint: duplicate entry '" + e.name + "'");
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank > kMaxRank) throw CheckpointError("checkpoint: entry '" + e.name + "' has rank " + std::to_string(rank));
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      e.dims.push_back(r.get<std::uint32_t>("dims"));
      elements *= e.dims.back();
      if (elements > r.remaining()) throw CheckpointError("checkpoint truncated in entry '" + e.name + "'");
    }
    r.need(elements * 4, "tensor data");
    e.data.resize(elements);
    for (auto& f : e.data) f = std::bit_cast<float>(r.get<std::uint32_t>("tensor data"));

    if (e.name.rfind("config.", 0) == 0) {
      auto it = by_key.find(e.name);
      if (it == by_key.end()) throw CheckpointError("checkpoint: unknown configuration key '" + e.name + "'");
      if (rank != 0) throw CheckpointError("checkpoint: configuration entry '" + e.name + "' must be rank 0");
      const float v = e.data[0];
      if (!std::isfinite(v) || v != std::round(v) || std::abs(v) > 1e6f) {
        throw CheckpointError("checkpoint: configuration entry '" + e.name + "' is not an integer");
      }
      it->second->set(ckpt.config, static_cast<long>(v));
      by_key.erase(it);
    } else {
      ckpt.tensors.push_back(std::move(e));
    }
  }
  if (!by_key.empty()) throw CheckpointError("checkpoint: missing configuration entry '" + by_key.begin()->first + "'");
  if (r.remaining() != 0) throw CheckpointError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  return ckpt;
}

}  // namespace asymcodec
