#ifndef ASYMCODEC_CHECKPOINT_HPP
#define ASYMCODEC_CHECKPOINT_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asymcodec/io.hpp"
#include "asymcodec/networks.hpp"

namespace asymcodec {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const CheckpointEntry&) const = default;
};

/// ALC1 file contents: model configuration (stored as rank-0 "config.*"
/// entries) followed by every parameter in registration order.
struct Checkpoint {
  ModelConfig config;
  std::vector<CheckpointEntry> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on any structural problem.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

template <typename Scalar>
Checkpoint make_checkpoint(const CodecModel<Scalar>& model) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  const auto& store = model.parameters();
  for (const auto& name : store.names()) {
    const auto& t = store.get(name).value();
    CheckpointEntry e;
    e.name = name;
    for (Index d : t.shape().dims) e.dims.push_back(static_cast<std::uint32_t>(d));
    e.data.resize(static_cast<std::size_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) e.data[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
    ckpt.tensors.push_back(std::move(e));
  }
  return ckpt;
}

/// Builds a model from the stored configuration and copies every tensor in.
/// Throws CheckpointError on missing, unknown, or mis-shaped tensors.
template <typename Scalar>
std::unique_ptr<CodecModel<Scalar>> instantiate(const Checkpoint& ckpt) {
  std::unique_ptr<CodecModel<Scalar>> model;
  try {
    model = std::make_unique<CodecModel<Scalar>>(ckpt.config);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: invalid model configuration: ") + e.what());
  }
  auto& store = model->parameters();
  std::size_t matched = 0;
  for (const auto& e : ckpt.tensors) {
    if (!store.contains(e.name)) throw CheckpointError("checkpoint: unknown tensor '" + e.name + "'");
    auto v = store.get(e.name);
    const Shape& s = v.shape();
    bool same = e.dims.size() == 4;
    for (std::size_t i = 0; same && i < 4; ++i) same = e.dims[i] == static_cast<std::uint32_t>(s.dims[i]);
    if (!same) throw CheckpointError("checkpoint: tensor '" + e.name + "' does not have shape " + s.str());
    auto& t = v.mutable_value();
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(e.data[static_cast<std::size_t>(i)]);
    ++matched;
  }
  if (matched != store.names().size()) {
    for (const auto& name : store.names()) {
      const bool found = std::any_of(ckpt.tensors.begin(), ckpt.tensors.end(), [&](const auto& e) { return e.name == name; });
      if (!found) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
    }
    throw CheckpointError("checkpoint: duplicate tensors");
  }
  return model;
}

/// Identifier written into bitstreams: FNV-1a of the serialized checkpoint.
template <typename Scalar>
std::uint64_t model_id(const CodecModel<Scalar>& model) {
  return fnv1a64(encode_checkpoint(make_checkpoint(model)));
}

template <typename Scalar>
void save_model(const std::filesystem::path& path, const CodecModel<Scalar>& model) {
  write_file(path, encode_checkpoint(make_checkpoint(model)));
}

/// Reads and instantiates; I/O failures surface as std::ios_base::failure.
template <typename Scalar>
std::unique_ptr<CodecModel<Scalar>> load_model(const std::filesystem::path& path) {
  return instantiate<Scalar>(decode_checkpoint(read_file(path)));
}

}  // namespace asymcodec

#endif  // ASYMCODEC_CHECKPOINT_HPP
