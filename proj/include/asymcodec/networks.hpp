#ifndef ASYMCODEC_NETWORKS_HPP
#define ASYMCODEC_NETWORKS_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "asymcodec/blocks.hpp"
#include "asymcodec/likelihood.hpp"
#include "asymcodec/quantization.hpp"

namespace asymcodec {

enum class ImportanceMode { Learned, Off, Prior };

std::string to_string(ImportanceMode mode);
ImportanceMode importance_mode_from_string(const std::string& name);

struct ModelConfig {
  Index n_latent = 32;
  Index n_hyper = 32;
  Index k_mixture = 3;
  int encoder_msrb_stages = 3;
  int decoder_msrb_stages = 1;
  Index base_width = 64;
  bool attention_enabled = true;
  BlockKind block_kind = BlockKind::ImprovedMsrb;
  std::array<int, 2> branch_kernels{3, 5};
  int crb_depth = 3;
  ImportanceMode importance = ImportanceMode::Learned;
  bool pqf_enabled = true;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  BlockConfig block(Index channels) const { return {block_kind, channels, branch_kernels, crb_depth}; }

  /// Presets mirroring the full-size latent widths (N = 128 or 256).
  static ModelConfig preset(Index n_latent);
};

/// Core spatial reduction of the backbone and the extra hyper reduction.
inline constexpr Index kBackboneFactor = 16;
inline constexpr Index kHyperFactor = 4;
inline constexpr Index kPadMultiple = kBackboneFactor * kHyperFactor;

/// Stride-2 stage: main path conv(s2) -> lrelu -> conv -> (I)GDN plus a
/// projection shortcut that carries the size change.
template <typename Scalar>
class DownStage {
 public:
  DownStage(ParameterStore<Scalar>& store, const std::string& name, Index in_ch, Index out_ch, Padding padding)
      : conv_a_(store, name + ".conv_a", in_ch, out_ch, 3, {2, padding}),
        conv_b_(store, name + ".conv_b", out_ch, out_ch, 3, {1, padding}),
        gdn_(store, name + ".gdn", out_ch, false),
        shortcut_(store, name + ".shortcut", in_ch, out_ch, 1, {2, Padding::Zero}) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return add(gdn_(conv_b_(lrelu(conv_a_(x)))), shortcut_(x));
  }

 private:
  Conv<Scalar> conv_a_, conv_b_;
  Gdn<Scalar> gdn_;
  Conv<Scalar> shortcut_;
};

template <typename Scalar>
class UpStage {
 public:
  UpStage(ParameterStore<Scalar>& store, const std::string& name, Index in_ch, Index out_ch)
      : up_(store, name + ".up", in_ch, out_ch, 3, 2),
        conv_b_(store, name + ".conv_b", out_ch, out_ch, 3),
        igdn_(store, name + ".igdn", out_ch, true),
        shortcut_(store, name + ".shortcut", in_ch, out_ch, 3, 2) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return add(igdn_(conv_b_(lrelu(up_(x)))), shortcut_(x));
  }

 private:
  ConvTranspose<Scalar> up_;
  Conv<Scalar> conv_b_;
  Gdn<Scalar> igdn_;
  ConvTranspose<Scalar> shortcut_;
};

/// Everything produced by one pass of the full model.
template <typename Scalar>
struct ForwardResult {
  Var<Scalar> y, importance, y_tilde, y_hat, z, z_hat, head, y_filtered, x_hat;
  Var<Scalar> bits_y, bits_z;
};

enum class QuantMode { Noise, Round };

/// The complete asymmetric codec: backbone encoder with importance map,
/// hyperprior, mixture entropy head, post-quantization filter, decoder.
template <typename Scalar>
class CodecModel {
 public:
  explicit CodecModel(const ModelConfig& config, std::uint64_t seed = 1) : config_(config), store_(seed) {
    config_.validate();
    const Index c = config_.base_width, n = config_.n_latent, m = config_.n_hyper;
    auto& s = store_;

    // Encoder: four stride-2 stages; MSRBs follow stages 1..encoder_msrb_stages,
    // attention follows stages 2 and 4.
    enc_stages_.emplace_back(s, "encoder.stage1", 3, c, Padding::SameReflect);
    enc_stages_.emplace_back(s, "encoder.stage2", c, c, Padding::Zero);
    enc_stages_.emplace_back(s, "encoder.stage3", c, c, Padding::Zero);
    enc_stages_.emplace_back(s, "encoder.stage4", c, n, Padding::Zero);
    for (int i = 0; i < config_.encoder_msrb_stages; ++i) {
      enc_blocks_.push_back(make_block(s, "encoder.msrb" + std::to_string(i + 1), config_.block(c)));
    }
    if (config_.attention_enabled) {
      enc_attention_.push_back(std::make_unique<AttentionModule<Scalar>>(s, "encoder.attention1", c));
      enc_attention_.push_back(std::make_unique<AttentionModule<Scalar>>(s, "encoder.attention2", n));
    }

    if (config_.importance == ImportanceMode::Learned) {
      imp_conv_ = Conv<Scalar>(s, "importance.conv", n, n, 3);
      for (int i = 0; i < 3; ++i) imp_blocks_.emplace_back(s, "importance.rb" + std::to_string(i), n);
    }

    // Hyper encoder: conv, two stride-2 convs; the last carries no activation.
    hyper_enc_.emplace_back(s, "hyper_encoder.conv1", n, m, 3);
    hyper_enc_.emplace_back(s, "hyper_encoder.conv2", m, m, 3, ConvOptions{2, Padding::Zero});
    hyper_enc_.emplace_back(s, "hyper_encoder.conv3", m, m, 3, ConvOptions{2, Padding::Zero});

    hyper_dec_up_.emplace_back(s, "hyper_decoder.up1", m, m, 3, 2);
    hyper_dec_up_.emplace_back(s, "hyper_decoder.up2", m, m, 3, 2);
    hyper_dec_out_ = Conv<Scalar>(s, "hyper_decoder.conv3", m, 2 * n, 3);

    layout_ = MixtureLayout{config_.k_mixture, n};
    head_hidden_ = Conv<Scalar>(s, "entropy_params.conv1", 2 * n, 2 * n, 1);
    head_out_ = Conv<Scalar>(s, "entropy_params.conv2", 2 * n, layout_.head_channels(), 1);

    // sigma = scale_min + softplus(raw); raw = 0.3617 gives sigma ~ 1.
    factorized_mean_ = s.add_constant("factorized.mean", Shape(1, m, 1, 1), Scalar(0));
    factorized_raw_scale_ = s.add_constant("factorized.raw_scale", Shape(1, m, 1, 1), Scalar(0.3617));

    if (config_.pqf_enabled) pqf_ = PostQuantFilter<Scalar>(s, n);

    // Decoder mirrors the encoder with decoder_msrb_stages MSRBs after the
    // first upsampling stages and attention at 1/16 and 1/4 scale.
    if (config_.attention_enabled) {
      dec_attention_.push_back(std::make_unique<AttentionModule<Scalar>>(s, "decoder.attention1", n));
      dec_attention_.push_back(std::make_unique<AttentionModule<Scalar>>(s, "decoder.attention2", c));
    }
    dec_stages_.emplace_back(s, "decoder.stage1", n, c);
    dec_stages_.emplace_back(s, "decoder.stage2", c, c);
    dec_stages_.emplace_back(s, "decoder.stage3", c, c);
    for (int i = 0; i < config_.decoder_msrb_stages; ++i) {
      dec_blocks_.push_back(make_block(s, "decoder.msrb" + std::to_string(i + 1), config_.block(c)));
    }
    dec_out_ = ConvTranspose<Scalar>(s, "decoder.stage4.up", c, 3, 3, 2);
  }

  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore<Scalar>& parameters() { return store_; }
  const ParameterStore<Scalar>& parameters() const { return store_; }
  const MixtureLayout& mixture_layout() const { return layout_; }
  const PostQuantFilter<Scalar>& pqf() const { return pqf_; }

  /// x in [-1, 1], (B, 3, H, W) with H, W divisible by 16 -> y (B, N, H/16, W/16).
  Var<Scalar> encode_backbone(const Var<Scalar>& x) const {
    const Shape& xs = x.shape();
    detail::require(xs.channels() == 3, "encode_backbone: expected 3 input channels, got " + std::to_string(xs.channels()));
    detail::require(xs.height() % kBackboneFactor == 0 && xs.width() % kBackboneFactor == 0,
                    "encode_backbone: height and width must be divisible by 16, got " + xs.str());
    Var<Scalar> h = x;
    for (std::size_t stage = 0; stage < enc_stages_.size(); ++stage) {
      h = enc_stages_[stage](h);
      if (stage < 3 && stage < enc_blocks_.size()) h = (*enc_blocks_[stage])(h);
      if (!enc_attention_.empty() && stage == 1) h = (*enc_attention_[0])(h);
      if (!enc_attention_.empty() && stage == 3) h = (*enc_attention_[1])(h);
    }
    return h;
  }

  /// Learned map softsign(tanh(w)), the prior ramp of channel 0, or none.
  std::optional<Var<Scalar>> importance_map(const Var<Scalar>& y) const {
    switch (config_.importance) {
      case ImportanceMode::Learned: {
        Var<Scalar> w = imp_conv_(y);
        for (const auto& b : imp_blocks_) w = b(w);
        return softsign(tanh(w));
      }
      case ImportanceMode::Prior:
        return prior_importance_mask(y);
      case ImportanceMode::Off:
        break;
    }
    return std::nullopt;
  }

  Var<Scalar> hyper_encode(const Var<Scalar>& y_tilde) const {
    auto h = lrelu(hyper_enc_[0](y_tilde));
    h = lrelu(hyper_enc_[1](h));
    return hyper_enc_[2](h);
  }

  Var<Scalar> hyper_decode(const Var<Scalar>& z_hat) const {
    auto h = lrelu(hyper_dec_up_[0](z_hat));
    h = lrelu(hyper_dec_up_[1](h));
    return hyper_dec_out_(h);
  }

  /// Raw mixture head (B, 3KN, h, w); see MixtureLayout.
  Var<Scalar> entropy_params(const Var<Scalar>& psi) const {
    detail::require(psi.shape().channels() == 2 * config_.n_latent,
                    "entropy_params: expected " + std::to_string(2 * config_.n_latent) + " channels, got " +
                        std::to_string(psi.shape().channels()));
    return head_out_(lrelu(head_hidden_(psi)));
  }

  /// Factorized prior of z as a one-component mixture head.
  Var<Scalar> factorized_head(const Shape& z_shape) const {
    const Shape s(z_shape.batch(), z_shape.channels(), z_shape.height(), z_shape.width());
    return concat_channels<Scalar>({Var<Scalar>::constant(Tensor<Scalar>(s)),
                                    broadcast_channels(factorized_mean_, s),
                                    broadcast_channels(factorized_raw_scale_, s)});
  }

  const Var<Scalar>& factorized_mean() const { return factorized_mean_; }
  const Var<Scalar>& factorized_raw_scale() const { return factorized_raw_scale_; }

  Var<Scalar> decode_backbone(const Var<Scalar>& y_hat) const {
    detail::require(y_hat.shape().channels() == config_.n_latent,
                    "decode_backbone: expected " + std::to_string(config_.n_latent) + " channels, got " +
                        std::to_string(y_hat.shape().channels()));
    Var<Scalar> h = y_hat;
    if (!dec_attention_.empty()) h = (*dec_attention_[0])(h);
    for (std::size_t stage = 0; stage < dec_stages_.size(); ++stage) {
      h = dec_stages_[stage](h);
      if (!dec_attention_.empty() && stage == 1) h = (*dec_attention_[1])(h);
      if (stage < dec_blocks_.size()) h = (*dec_blocks_[stage])(h);
    }
    return clamp(dec_out_(h), Scalar(-1), Scalar(1));
  }

  /// Applies the post-quantization filter when the model has one.
  Var<Scalar> filter_latent(const Var<Scalar>& y_hat, bool frozen_params = false) const {
    if (!pqf_.defined()) return y_hat;
    return frozen_params ? pqf_.frozen(y_hat) : pqf_(y_hat);
  }

  /// Full pass. Noise mode draws the y and z perturbations from `seed`.
  /// The decoder sees the filtered latent through frozen PQF parameters, so
  /// the filter is trained only through its own loss term.
  ForwardResult<Scalar> forward(const Var<Scalar>& x, QuantMode mode, std::uint64_t seed = 0) const {
    ForwardResult<Scalar> r;
    r.y = encode_backbone(x);
    auto imp = importance_map(r.y);
    r.importance = imp ? *imp : Var<Scalar>();
    r.y_tilde = imp ? mul(r.y, *imp) : r.y;
    r.z = hyper_encode(r.y_tilde);
    if (mode == QuantMode::Noise) {
      r.y_hat = quantize_train(r.y_tilde, seed * 2 + 1);
      r.z_hat = quantize_train(r.z, seed * 2 + 2);
    } else {
      r.y_hat = Var<Scalar>::constant(quantize_infer(r.y_tilde.value()));
      r.z_hat = Var<Scalar>::constant(quantize_infer(r.z.value()));
    }
    r.head = entropy_params(hyper_decode(r.z_hat));
    r.bits_y = mixture_bits(r.y_hat, r.head, layout_);
    r.bits_z = mixture_bits(r.z_hat, factorized_head(r.z_hat.shape()), MixtureLayout{1, config_.n_hyper});
    r.y_filtered = filter_latent(r.y_hat, true);
    r.x_hat = decode_backbone(r.y_filtered);
    return r;
  }

 private:
  /// m_c = clamp(y_0 - c, 0, 1): the first latent channel spread over all
  /// channels by a unit ramp.
  Var<Scalar> prior_importance_mask(const Var<Scalar>& y) const {
    auto first = slice_channels(y, 0, 1);
    std::vector<Var<Scalar>> planes;
    for (Index c = 0; c < y.shape().channels(); ++c) {
      planes.push_back(clamp(add_scalar(first, static_cast<Scalar>(-c)), Scalar(0), Scalar(1)));
    }
    return concat_channels(planes);
  }

  ModelConfig config_;
  ParameterStore<Scalar> store_;
  MixtureLayout layout_;

  std::vector<DownStage<Scalar>> enc_stages_;
  std::vector<std::unique_ptr<Block<Scalar>>> enc_blocks_;
  std::vector<std::unique_ptr<AttentionModule<Scalar>>> enc_attention_;

  Conv<Scalar> imp_conv_;
  std::vector<ResidualBlock<Scalar>> imp_blocks_;

  std::vector<Conv<Scalar>> hyper_enc_;
  std::vector<ConvTranspose<Scalar>> hyper_dec_up_;
  Conv<Scalar> hyper_dec_out_;
  Conv<Scalar> head_hidden_, head_out_;
  Var<Scalar> factorized_mean_, factorized_raw_scale_;

  PostQuantFilter<Scalar> pqf_;

  std::vector<std::unique_ptr<AttentionModule<Scalar>>> dec_attention_;
  std::vector<UpStage<Scalar>> dec_stages_;
  std::vector<std::unique_ptr<Block<Scalar>>> dec_blocks_;
  ConvTranspose<Scalar> dec_out_;
};

/// Elementwise product y * m.
template <typename Scalar>
Var<Scalar> apply_mask(const Var<Scalar>& y, const Var<Scalar>& m) {
  return mul(y, m);
}

}  // namespace asymcodec

#endif  // ASYMCODEC_NETWORKS_HPP
