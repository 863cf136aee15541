#ifndef ASYMCODEC_CODEC_HPP
#define ASYMCODEC_CODEC_HPP

#include <cstdint>
#include <limits>

#include "asymcodec/entropy.hpp"
#include "asymcodec/image.hpp"
#include "asymcodec/networks.hpp"

namespace asymcodec {

/// Per-channel factorized prior of z in coder form.
template <typename Scalar>
FactorizedPrior factorized_prior(const CodecModel<Scalar>& model) {
  FactorizedPrior p;
  const auto& mean = model.factorized_mean().value();
  const auto& raw = model.factorized_raw_scale().value();
  for (Index c = 0; c < mean.size(); ++c) {
    p.means.push_back(static_cast<double>(mean[c]));
    p.scales.push_back(kScaleMin + softplus_scalar(static_cast<double>(raw[c])));
  }
  return p;
}

/// Mixture parameters of y given a decoded z_hat.
template <typename Scalar>
GmmParams mixture_params(const CodecModel<Scalar>& model, const Tensor<Scalar>& z_hat) {
  NoGradGuard guard;
  const auto head = model.entropy_params(model.hyper_decode(Var<Scalar>(z_hat)));
  return GmmParams::from_head(head.value(), model.mixture_layout());
}

/// Rounded latents of a padded (1, 3, H, W) input in [-1, 1].
template <typename Scalar>
struct Latents {
  Tensor<Scalar> y_hat, z_hat;
};

template <typename Scalar>
Latents<Scalar> analyze(const CodecModel<Scalar>& model, const Tensor<Scalar>& x) {
  NoGradGuard guard;
  const Var<Scalar> xv(x);
  const auto y = model.encode_backbone(xv);
  const auto m = model.importance_map(y);
  const auto y_tilde = m ? mul(y, *m) : y;
  const auto z = model.hyper_encode(y_tilde);
  return {quantize_infer(y_tilde.value()), quantize_infer(z.value())};
}

/// Reconstruction in [-1, 1] at padded size from decoded latents.
template <typename Scalar>
Tensor<Scalar> synthesize(const CodecModel<Scalar>& model, const Tensor<Scalar>& y_hat, bool use_pqf) {
  NoGradGuard guard;
  Var<Scalar> y(y_hat);
  if (use_pqf) y = model.filter_latent(y, true);
  return model.decode_backbone(y).value();
}

/// Encodes an image: reflect-pads to a multiple of 64, codes the rounded
/// latents, and records the true size. Throws SymbolRangeError when a latent
/// leaves the codable range and std::invalid_argument for oversized images.
template <typename Scalar>
CodecBitstream compress(const CodecModel<Scalar>& model, const Image& image, std::uint64_t id, bool use_pqf = true) {
  constexpr Index kMaxSide = std::numeric_limits<std::uint16_t>::max();
  if (image.width <= 0 || image.height <= 0 || image.width > kMaxSide || image.height > kMaxSide) {
    throw std::invalid_argument("compress: image size " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + " outside 1..65535");
  }
  const auto x = pad_reflect(image_to_unit<Scalar>(image), kPadMultiple);
  const auto lat = analyze(model, x);
  const auto gmm = mixture_params(model, lat.z_hat);
  const auto payloads = encode_latents(lat.y_hat.template cast<double>(), lat.z_hat.template cast<double>(), gmm,
                                       factorized_prior(model));
  CodecBitstream b;
  b.version = static_cast<std::uint8_t>(kBitstreamVersion | (use_pqf ? 0 : kNoPqfBit));
  b.width = static_cast<std::uint16_t>(image.width);
  b.height = static_cast<std::uint16_t>(image.height);
  b.n_latent = static_cast<std::uint16_t>(model.config().n_latent);
  b.k_mixture = static_cast<std::uint8_t>(model.config().k_mixture);
  b.symbol_min = static_cast<std::int16_t>(payloads.bounds.min);
  b.symbol_max = static_cast<std::int16_t>(payloads.bounds.max);
  b.model_id = id;
  b.flags = payloads.flags.to_bytes();
  b.z_payload = payloads.z_payload;
  b.y_payload = payloads.y_payload;
  return b;
}

template <typename Scalar>
struct DecodedLatents {
  Tensor<Scalar> y_hat, z_hat;
};

/// Entropy-decodes the latents of a parsed stream. Throws BitstreamError
/// when the stream belongs to another model or its payloads are corrupt.
template <typename Scalar>
DecodedLatents<Scalar> decode_stream_latents(const CodecModel<Scalar>& model, const CodecBitstream& b,
                                             std::uint64_t id) {
  const auto& cfg = model.config();
  if (b.model_id != id) throw BitstreamError("bitstream was produced by a different model");
  if (b.n_latent != cfg.n_latent || b.k_mixture != cfg.k_mixture) {
    throw BitstreamError("bitstream latent layout (N=" + std::to_string(b.n_latent) + ", K=" +
                         std::to_string(b.k_mixture) + ") does not match the model");
  }
  const Index h = padded_size(b.height, kPadMultiple), w = padded_size(b.width, kPadMultiple);
  const Shape ys(1, cfg.n_latent, h / kBackboneFactor, w / kBackboneFactor);
  const Shape zs(1, cfg.n_hyper, h / kPadMultiple, w / kPadMultiple);
  LatentPayloads p{ChannelFlags::from_bytes(b.flags, cfg.n_latent), b.bounds(), b.z_payload, b.y_payload};
  auto [y, z] = decode_latents(p, ys, zs, factorized_prior(model),
                               [&](const TensorD& z_hat) { return mixture_params(model, z_hat.cast<Scalar>()); });
  return {y.template cast<Scalar>(), z.template cast<Scalar>()};
}

template <typename Scalar>
Image decompress(const CodecModel<Scalar>& model, const CodecBitstream& b, std::uint64_t id) {
  const auto lat = decode_stream_latents(model, b, id);
  const auto x_hat = synthesize(model, lat.y_hat, !b.pqf_disabled());
  return unit_to_image(crop(x_hat, b.height, b.width));
}

}  // namespace asymcodec

#endif  // ASYMCODEC_CODEC_HPP
