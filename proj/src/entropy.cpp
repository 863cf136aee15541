#include "asymcodec/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asymcodec/quantization.hpp"

namespace asymcodec {

namespace {

constexpr std::uint32_t kTop = 1u << 24;

}  // namespace

FrequencyTable::FrequencyTable(std::vector<std::uint32_t> freq) : freq_(std::move(freq)) {
  if (freq_.empty()) throw std::invalid_argument("frequency table: empty alphabet");
  cum_.resize(freq_.size() + 1);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < freq_.size(); ++i) {
    if (freq_[i] == 0) throw std::invalid_argument("frequency table: symbol " + std::to_string(i) + " has zero width");
    cum_[i] = static_cast<std::uint32_t>(total);
    total += freq_[i];
  }
  if (total != kFrequencyTotal) {
    throw std::invalid_argument("frequency table: total " + std::to_string(total) + " != " +
                                std::to_string(kFrequencyTotal));
  }
  cum_.back() = kFrequencyTotal;
}

FrequencyTable FrequencyTable::from_pmf(std::span<const double> pmf) {
  if (pmf.size() > kFrequencyTotal) throw std::invalid_argument("frequency table: alphabet exceeds 2^16 symbols");
  std::vector<std::uint32_t> freq(pmf.size());
  std::int64_t total = 0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    const double scaled = std::llround(std::clamp(pmf[i], 0.0, 1.0) * kFrequencyTotal);
    freq[i] = static_cast<std::uint32_t>(std::max(1.0, scaled));
    total += freq[i];
  }
  std::int64_t diff = static_cast<std::int64_t>(kFrequencyTotal) - total;
  while (diff != 0) {
    auto it = std::max_element(freq.begin(), freq.end());
    if (diff > 0) {
      *it += static_cast<std::uint32_t>(diff);
      break;
    }
    const std::int64_t take = std::min<std::int64_t>(-diff, std::max<std::int64_t>(1, (*it - 1) / 2));
    if (*it <= 1) throw std::invalid_argument("frequency table: alphabet too large to give every symbol a slot");
    *it -= static_cast<std::uint32_t>(take);
    diff += take;
  }
  return FrequencyTable(std::move(freq));
}

int FrequencyTable::find(std::uint32_t value) const {
  auto it = std::upper_bound(cum_.begin(), cum_.end(), value);
  return static_cast<int>(it - cum_.begin()) - 1;
}

void RangeEncoder::encode(const FrequencyTable& table, int symbol) {
  const std::uint32_t r = range_ >> kFrequencyBits;
  low_ += static_cast<std::uint64_t>(r) * table.cum(symbol);
  range_ = r * table.freq(symbol);
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::shift_low() {
  if (low_ < 0xFF000000u || low_ >= (std::uint64_t{1} << 32)) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t byte = cache_;
    do {
      // The very first byte is always zero and is not stored.
      if (!first_) out_.push_back(static_cast<std::uint8_t>(byte + carry));
      first_ = false;
      byte = 0xFF;
    } while (--pending_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++pending_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  // Pick the value in [low, low + range) with the most trailing zero bits,
  // emit it, and let the decoder's zero padding supply the rest.
  const std::uint64_t high = low_ + range_;
  for (int k = 32; k >= 0; --k) {
    const std::uint64_t mask = (std::uint64_t{1} << k) - 1;
    const std::uint64_t v = (low_ + mask) & ~mask;
    if (v < high) {
      low_ = v;
      break;
    }
  }
  for (int i = 0; i < 5; ++i) shift_low();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  std::vector<std::uint8_t> out = std::move(out_);
  *this = RangeEncoder();
  return out;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> data) : data_(data) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() { return pos_ < data_.size() ? data_[pos_++] : (++pos_, std::uint8_t{0}); }

int RangeDecoder::decode(const FrequencyTable& table) {
  const std::uint32_t r = range_ >> kFrequencyBits;
  const std::uint32_t value = code_ / r;
  if (value >= kFrequencyTotal) throw BitstreamError("range decoder: code value outside the coding interval");
  const int s = table.find(value);
  code_ -= r * table.cum(s);
  range_ = r * table.freq(s);
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return s;
}

std::vector<double> mixture_pmf(const MixtureSample& mix, SymbolBounds bounds) {
  std::vector<double> pmf(static_cast<std::size_t>(bounds.count()));
  double total = 0;
  for (int q = bounds.min; q <= bounds.max; ++q) {
    double p = 0;
    for (std::size_t k = 0; k < mix.weights.size(); ++k) {
      p += mix.weights[k] * normal_interval_mass(q - 0.5, q + 0.5, mix.means[k], mix.scales[k]);
    }
    p = std::max(p, kPmfFloor);
    pmf[static_cast<std::size_t>(q - bounds.min)] = p;
    total += p;
  }
  for (double& p : pmf) p /= total;
  return pmf;
}

double gmm_pmf(int q, const MixtureSample& mix, SymbolBounds bounds) {
  if (!bounds.contains(q)) {
    throw std::out_of_range("symbol " + std::to_string(q) + " outside [" + std::to_string(bounds.min) + ", " +
                            std::to_string(bounds.max) + "]");
  }
  return mixture_pmf(mix, bounds)[static_cast<std::size_t>(q - bounds.min)];
}

double factorized_pmf(int q, double mean, double scale, SymbolBounds bounds) {
  return gmm_pmf(q, MixtureSample{{1.0}, {mean}, {scale}}, bounds);
}

MixtureSample GmmParams::sample(Index element) const {
  const auto begin = static_cast<std::ptrdiff_t>(element * components);
  const auto end = begin + static_cast<std::ptrdiff_t>(components);
  return MixtureSample{{weights.begin() + begin, weights.begin() + end},
                       {means.begin() + begin, means.begin() + end},
                       {scales.begin() + begin, scales.begin() + end}};
}

std::vector<std::uint8_t> ChannelFlags::to_bytes() const {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

ChannelFlags ChannelFlags::from_bytes(std::span<const std::uint8_t> bytes, Index channels) {
  const auto n = static_cast<std::size_t>(channels);
  if (bytes.size() != (n + 7) / 8) {
    throw BitstreamError("channel flags: " + std::to_string(bytes.size()) + " bytes for " + std::to_string(n) +
                         " channels");
  }
  ChannelFlags f;
  f.bits.resize(n);
  for (std::size_t i = 0; i < bytes.size() * 8; ++i) {
    const bool bit = (bytes[i / 8] >> (i % 8)) & 1u;
    if (i < n) {
      f.bits[i] = bit;
    } else if (bit) {
      throw BitstreamError("channel flags: padding bit " + std::to_string(i) + " is set");
    }
  }
  return f;
}

Index ChannelFlags::skipped() const { return static_cast<Index>(std::count(bits.begin(), bits.end(), true)); }

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    auto u = static_cast<std::make_unsigned_t<T>>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void bytes(std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::vector<std::uint8_t> bytes(std::size_t n, const char* what) {
    need(n, what);
    std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw BitstreamError(std::string("truncated bitstream: ") + what + " needs " + std::to_string(n) +
                           " bytes, " + std::to_string(remaining()) + " left");
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t CodecBitstream::header_size() const { return 24 + flags.size(); }

std::vector<std::uint8_t> CodecBitstream::serialize() const {
  Writer w;
  for (char c : kBitstreamMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(version);
  w.put(width);
  w.put(height);
  w.put(n_latent);
  w.put(k_mixture);
  w.put(symbol_min);
  w.put(symbol_max);
  w.put(model_id);
  w.bytes(flags);
  w.put(static_cast<std::uint32_t>(z_payload.size()));
  w.bytes(z_payload);
  w.put(static_cast<std::uint32_t>(y_payload.size()));
  w.bytes(y_payload);
  return std::move(w.out);
}

CodecBitstream CodecBitstream::parse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char c : kBitstreamMagic) {
    if (r.get<std::uint8_t>("magic") != static_cast<std::uint8_t>(c)) throw BitstreamError("not an ACB1 bitstream");
  }
  CodecBitstream b;
  b.version = r.get<std::uint8_t>("version");
  if ((b.version & ~kNoPqfBit) != kBitstreamVersion) {
    throw BitstreamError("unsupported bitstream version " + std::to_string(b.version & ~kNoPqfBit));
  }
  b.width = r.get<std::uint16_t>("width");
  b.height = r.get<std::uint16_t>("height");
  b.n_latent = r.get<std::uint16_t>("latent channels");
  b.k_mixture = r.get<std::uint8_t>("mixture components");
  b.symbol_min = r.get<std::int16_t>("symbol_min");
  b.symbol_max = r.get<std::int16_t>("symbol_max");
  b.model_id = r.get<std::uint64_t>("model id");
  if (b.width == 0 || b.height == 0) throw BitstreamError("bitstream: zero image dimension");
  if (b.n_latent == 0) throw BitstreamError("bitstream: zero latent channels");
  if (b.k_mixture < 1 || b.k_mixture > 5) {
    throw BitstreamError("bitstream: mixture components " + std::to_string(b.k_mixture) + " outside [1, 5]");
  }
  if (b.symbol_min > b.symbol_max || b.symbol_min < kSymbolMin || b.symbol_max > kSymbolMax) {
    throw BitstreamError("bitstream: invalid symbol bounds [" + std::to_string(b.symbol_min) + ", " +
                         std::to_string(b.symbol_max) + "]");
  }
  b.flags = r.bytes((b.n_latent + 7u) / 8u, "channel flags");
  ChannelFlags::from_bytes(b.flags, b.n_latent);
  b.z_payload = r.bytes(r.get<std::uint32_t>("z length"), "z payload");
  b.y_payload = r.bytes(r.get<std::uint32_t>("y length"), "y payload");
  if (r.remaining() != 0) throw BitstreamError("bitstream: " + std::to_string(r.remaining()) + " trailing bytes");
  return b;
}

SymbolBounds observed_bounds(const TensorD& y_hat, const TensorD& z_hat) {
  double lo = 0, hi = 0;
  bool any = false;
  for (const TensorD* t : {&y_hat, &z_hat}) {
    if (t->size() == 0) continue;
    const double tmin = t->array().minCoeff(), tmax = t->array().maxCoeff();
    lo = any ? std::min(lo, tmin) : tmin;
    hi = any ? std::max(hi, tmax) : tmax;
    any = true;
  }
  return {static_cast<int>(std::clamp<double>(lo, kSymbolMin, kSymbolMax)),
          static_cast<int>(std::clamp<double>(hi, kSymbolMin, kSymbolMax))};
}

namespace {

int symbol_index(double v, SymbolBounds bounds) {
  const double r = std::round(v);
  if (r != v || !(r >= bounds.min && r <= bounds.max)) {
    throw SymbolRangeError("latent value " + std::to_string(v) + " is not an integer in [" +
                           std::to_string(bounds.min) + ", " + std::to_string(bounds.max) + "]");
  }
  return static_cast<int>(r) - bounds.min;
}

void check_latents(const TensorD& y_hat, const TensorD& z_hat, const GmmParams* gmm, const FactorizedPrior& prior) {
  if (y_hat.shape().batch() != 1 || z_hat.shape().batch() != 1) {
    throw ShapeError("latents must have batch size 1, got " + y_hat.shape().str() + " and " + z_hat.shape().str());
  }
  if (prior.means.size() != static_cast<std::size_t>(z_hat.shape().channels()) ||
      prior.scales.size() != prior.means.size()) {
    throw ShapeError("factorized prior has " + std::to_string(prior.means.size()) + " channels, z has " +
                     std::to_string(z_hat.shape().channels()));
  }
  if (gmm && gmm->elements() != y_hat.size()) {
    throw ShapeError("mixture parameters cover " + std::to_string(gmm->elements()) + " elements, y has " +
                     std::to_string(y_hat.size()));
  }
}

FrequencyTable factorized_table(const FactorizedPrior& prior, Index c, SymbolBounds bounds) {
  const auto i = static_cast<std::size_t>(c);
  return FrequencyTable::from_pmf(mixture_pmf(MixtureSample{{1.0}, {prior.means[i]}, {prior.scales[i]}}, bounds));
}

}  // namespace

LatentPayloads encode_latents(const TensorD& y_hat, const TensorD& z_hat, const GmmParams& gmm,
                              const FactorizedPrior& prior) {
  check_latents(y_hat, z_hat, &gmm, prior);
  LatentPayloads out;
  out.flags = ChannelFlags::from_latent(y_hat);
  out.bounds = observed_bounds(y_hat, z_hat);

  RangeEncoder enc;
  const Shape& zs = z_hat.shape();
  for (Index c = 0; c < zs.channels(); ++c) {
    const FrequencyTable table = factorized_table(prior, c, out.bounds);
    const double* p = z_hat.plane_data(0, c);
    for (Index i = 0; i < zs.plane(); ++i) enc.encode(table, symbol_index(p[i], out.bounds));
  }
  out.z_payload = enc.finish();

  const Shape& ys = y_hat.shape();
  for (Index c = 0; c < ys.channels(); ++c) {
    if (out.flags.bits[static_cast<std::size_t>(c)]) continue;
    const double* p = y_hat.plane_data(0, c);
    for (Index i = 0; i < ys.plane(); ++i) {
      const auto table = FrequencyTable::from_pmf(mixture_pmf(gmm.sample(c * ys.plane() + i), out.bounds));
      enc.encode(table, symbol_index(p[i], out.bounds));
    }
  }
  out.y_payload = enc.finish();
  return out;
}

std::pair<TensorD, TensorD> decode_latents(const LatentPayloads& payloads, const Shape& y_shape, const Shape& z_shape,
                                           const FactorizedPrior& prior,
                                           const std::function<GmmParams(const TensorD&)>& gmm_for) {
  TensorD z_hat(z_shape), y_hat(y_shape);
  check_latents(y_hat, z_hat, nullptr, prior);
  if (payloads.flags.bits.size() != static_cast<std::size_t>(y_shape.channels())) {
    throw BitstreamError("channel flags cover " + std::to_string(payloads.flags.bits.size()) + " channels, y has " +
                         std::to_string(y_shape.channels()));
  }
  const SymbolBounds bounds = payloads.bounds;

  RangeDecoder zdec(payloads.z_payload);
  for (Index c = 0; c < z_shape.channels(); ++c) {
    const FrequencyTable table = factorized_table(prior, c, bounds);
    double* p = z_hat.plane_data(0, c);
    for (Index i = 0; i < z_shape.plane(); ++i) p[i] = zdec.decode(table) + bounds.min;
  }

  const GmmParams gmm = gmm_for(z_hat);
  check_latents(y_hat, z_hat, &gmm, prior);
  RangeDecoder ydec(payloads.y_payload);
  for (Index c = 0; c < y_shape.channels(); ++c) {
    if (payloads.flags.bits[static_cast<std::size_t>(c)]) continue;
    double* p = y_hat.plane_data(0, c);
    bool nonzero = false;
    for (Index i = 0; i < y_shape.plane(); ++i) {
      const auto table = FrequencyTable::from_pmf(mixture_pmf(gmm.sample(c * y_shape.plane() + i), bounds));
      p[i] = ydec.decode(table) + bounds.min;
      nonzero = nonzero || p[i] != 0;
    }
    if (!nonzero) throw BitstreamError("channel " + std::to_string(c) + " decoded all-zero but is not flagged");
  }
  return {std::move(y_hat), std::move(z_hat)};
}

RateEstimate estimate_bits(const TensorD& y_hat, const TensorD& z_hat, const GmmParams& gmm,
                           const FactorizedPrior& prior, SymbolBounds bounds) {
  check_latents(y_hat, z_hat, &gmm, prior);
  RateEstimate r;
  const Shape& zs = z_hat.shape();
  for (Index c = 0; c < zs.channels(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    const auto pmf = mixture_pmf(MixtureSample{{1.0}, {prior.means[i]}, {prior.scales[i]}}, bounds);
    const double* p = z_hat.plane_data(0, c);
    for (Index j = 0; j < zs.plane(); ++j) r.z_bits -= std::log2(pmf[static_cast<std::size_t>(symbol_index(p[j], bounds))]);
  }
  const auto flags = ChannelFlags::from_latent(y_hat);
  const Shape& ys = y_hat.shape();
  for (Index c = 0; c < ys.channels(); ++c) {
    if (flags.bits[static_cast<std::size_t>(c)]) continue;
    const double* p = y_hat.plane_data(0, c);
    for (Index j = 0; j < ys.plane(); ++j) {
      const auto pmf = mixture_pmf(gmm.sample(c * ys.plane() + j), bounds);
      r.y_bits -= std::log2(pmf[static_cast<std::size_t>(symbol_index(p[j], bounds))]);
    }
  }
  return r;
}

}  // namespace asymcodec
