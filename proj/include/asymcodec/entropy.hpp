#ifndef ASYMCODEC_ENTROPY_HPP
#define ASYMCODEC_ENTROPY_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "asymcodec/likelihood.hpp"
#include "asymcodec/tensor.hpp"

namespace asymcodec {

class BitstreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kFrequencyBits = 16;
inline constexpr std::uint32_t kFrequencyTotal = 1u << kFrequencyBits;
/// Smallest probability any in-bounds symbol receives before renormalization.
inline constexpr double kPmfFloor = 1.0 / 65536.0;

/// Inclusive integer alphabet [min, max].
struct SymbolBounds {
  int min = 0;
  int max = 0;

  int count() const { return max - min + 1; }
  bool contains(int q) const { return q >= min && q <= max; }
  bool operator==(const SymbolBounds&) const = default;
};

/// Integer frequencies summing to 2^16, every symbol at least 1.
class FrequencyTable {
 public:
  /// Throws std::invalid_argument on a zero frequency or a wrong total.
  explicit FrequencyTable(std::vector<std::uint32_t> freq);

  /// Quantizes a normalized pmf: each symbol gets max(1, round(p * 2^16)),
  /// and the rounding residue is settled on the largest entries.
  static FrequencyTable from_pmf(std::span<const double> pmf);

  int size() const { return static_cast<int>(freq_.size()); }
  std::uint32_t freq(int s) const { return freq_[s]; }
  std::uint32_t cum(int s) const { return cum_[s]; }
  /// Symbol s with cum(s) <= value < cum(s + 1).
  int find(std::uint32_t value) const;
  double probability(int s) const { return static_cast<double>(freq_[s]) / kFrequencyTotal; }

 private:
  std::vector<std::uint32_t> freq_, cum_;
};

/// Carry-propagating range encoder: 64-bit low, 32-bit range, byte output.
class RangeEncoder {
 public:
  void encode(const FrequencyTable& table, int symbol);
  /// Flushes the shortest byte string that pins the final interval.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 1;
  bool first_ = true;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  /// Bytes past the end of `data` read as zero.
  explicit RangeDecoder(std::span<const std::uint8_t> data);
  /// Throws BitstreamError when the code value falls outside every symbol's
  /// interval, which only happens on corrupted input.
  int decode(const FrequencyTable& table);

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

/// Floored and renormalized pmf over `bounds` of a Gaussian mixture
/// discretized on unit bins centred at the integers.
std::vector<double> mixture_pmf(const MixtureSample& mix, SymbolBounds bounds);

/// p(q) under the mixture. Throws std::out_of_range when q is outside bounds.
double gmm_pmf(int q, const MixtureSample& mix, SymbolBounds bounds);
/// p(q) under a single discretized Gaussian (the factorized prior of one channel).
double factorized_pmf(int q, double mean, double scale, SymbolBounds bounds);

/// Mixture parameters per latent element, element-major in channel-major
/// raster order: element e owns [e*K, (e+1)*K) of each array.
struct GmmParams {
  Index components = 1;
  std::vector<double> weights, means, scales;

  Index elements() const { return components ? static_cast<Index>(weights.size()) / components : 0; }
  MixtureSample sample(Index element) const;

  /// Reads a head tensor (1, 3KN, h, w) laid out per `layout`.
  template <typename Scalar>
  static GmmParams from_head(const Tensor<Scalar>& head, const MixtureLayout& layout);
};

/// One bit per latent channel, set iff the channel is entirely zero.
struct ChannelFlags {
  std::vector<bool> bits;

  template <typename Scalar>
  static ChannelFlags from_latent(const Tensor<Scalar>& y_hat);

  /// ceil(N/8) bytes; channel i in byte i/8, bit i%8, LSB first.
  std::vector<std::uint8_t> to_bytes() const;
  /// Throws BitstreamError on a length mismatch or set padding bits.
  static ChannelFlags from_bytes(std::span<const std::uint8_t> bytes, Index channels);

  Index skipped() const;
  bool operator==(const ChannelFlags&) const = default;
};

inline constexpr std::array<char, 4> kBitstreamMagic{'A', 'C', 'B', '1'};
inline constexpr std::uint8_t kBitstreamVersion = 1;
/// Version-byte bit marking a stream whose decoder skips the post-quantization filter.
inline constexpr std::uint8_t kNoPqfBit = 0x80;

struct CodecBitstream {
  std::uint8_t version = kBitstreamVersion;
  std::uint16_t width = 0, height = 0;
  std::uint16_t n_latent = 0;
  std::uint8_t k_mixture = 0;
  std::int16_t symbol_min = 0, symbol_max = 0;
  std::uint64_t model_id = 0;
  std::vector<std::uint8_t> flags;
  std::vector<std::uint8_t> z_payload, y_payload;

  bool pqf_disabled() const { return (version & kNoPqfBit) != 0; }
  SymbolBounds bounds() const { return {symbol_min, symbol_max}; }
  std::size_t header_size() const;
  std::size_t byte_size() const { return header_size() + 8 + z_payload.size() + y_payload.size(); }

  std::vector<std::uint8_t> serialize() const;
  /// Throws BitstreamError on bad magic, unknown version, malformed fields,
  /// truncation, or trailing bytes.
  static CodecBitstream parse(std::span<const std::uint8_t> bytes);

  bool operator==(const CodecBitstream&) const = default;
};

/// Factorized prior of z: one (mean, scale) per hyper channel.
struct FactorizedPrior {
  std::vector<double> means, scales;
};

/// Symbol bounds covering both latents, clamped to the codable range.
SymbolBounds observed_bounds(const TensorD& y_hat, const TensorD& z_hat);

struct LatentPayloads {
  ChannelFlags flags;
  SymbolBounds bounds;
  std::vector<std::uint8_t> z_payload, y_payload;
};

/// Codes z_hat (1, M, hz, wz) under the factorized prior, then the
/// unflagged channels of y_hat (1, N, h, w) under `gmm`, channel-major.
LatentPayloads encode_latents(const TensorD& y_hat, const TensorD& z_hat, const GmmParams& gmm,
                              const FactorizedPrior& prior);

/// Inverse of encode_latents. `gmm_for` maps the decoded z_hat to the
/// mixture parameters of y, exactly as on the encoder side.
std::pair<TensorD, TensorD> decode_latents(const LatentPayloads& payloads, const Shape& y_shape, const Shape& z_shape,
                                           const FactorizedPrior& prior,
                                           const std::function<GmmParams(const TensorD&)>& gmm_for);

/// Sum of -log2 p over the symbols encode_latents would code, using the
/// same floored pmfs (before frequency quantization).
struct RateEstimate {
  double z_bits = 0, y_bits = 0;
};
RateEstimate estimate_bits(const TensorD& y_hat, const TensorD& z_hat, const GmmParams& gmm,
                           const FactorizedPrior& prior, SymbolBounds bounds);

template <typename Scalar>
GmmParams GmmParams::from_head(const Tensor<Scalar>& head, const MixtureLayout& layout) {
  const Shape& s = head.shape();
  if (s.batch() != 1 || s.channels() != layout.head_channels()) {
    throw ShapeError("GmmParams: head " + s.str() + " does not match " + std::to_string(layout.head_channels()) +
                     " mixture channels");
  }
  GmmParams p;
  p.components = layout.components;
  const std::size_t total = static_cast<std::size_t>(layout.latent_channels * s.height() * s.width() * p.components);
  p.weights.reserve(total);
  p.means.reserve(total);
  p.scales.reserve(total);
  MixtureSample mix;
  for (Index c = 0; c < layout.latent_channels; ++c) {
    for (Index y = 0; y < s.height(); ++y) {
      for (Index x = 0; x < s.width(); ++x) {
        read_mixture(head, layout, 0, c, y, x, mix);
        p.weights.insert(p.weights.end(), mix.weights.begin(), mix.weights.end());
        p.means.insert(p.means.end(), mix.means.begin(), mix.means.end());
        p.scales.insert(p.scales.end(), mix.scales.begin(), mix.scales.end());
      }
    }
  }
  return p;
}

template <typename Scalar>
ChannelFlags ChannelFlags::from_latent(const Tensor<Scalar>& y_hat) {
  const Shape& s = y_hat.shape();
  if (s.batch() != 1) throw ShapeError("ChannelFlags: expected batch 1, got " + s.str());
  ChannelFlags f;
  f.bits.resize(static_cast<std::size_t>(s.channels()));
  for (Index c = 0; c < s.channels(); ++c) {
    const Scalar* p = y_hat.plane_data(0, c);
    bool zero = true;
    for (Index i = 0; i < s.plane() && zero; ++i) zero = p[i] == Scalar(0);
    f.bits[static_cast<std::size_t>(c)] = zero;
  }
  return f;
}

}  // namespace asymcodec

#endif  // ASYMCODEC_ENTROPY_HPP
