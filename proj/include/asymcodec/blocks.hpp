#ifndef ASYMCODEC_BLOCKS_HPP
#define ASYMCODEC_BLOCKS_HPP

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "asymcodec/layers.hpp"

namespace asymcodec {

enum class BlockKind { ResidualBlock, Crb, OriginalMsrb, ImprovedMsrb };

std::string to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& name);

struct BlockConfig {
  BlockKind kind = BlockKind::ImprovedMsrb;
  Index channels = 16;
  std::array<int, 2> branch_kernels{3, 5};
  int crb_depth = 3;

  /// Throws std::invalid_argument when the configuration is unusable.
  void validate() const;
};

/// Shape-preserving feature block.
template <typename Scalar>
class Block {
 public:
  virtual ~Block() = default;
  virtual Var<Scalar> operator()(const Var<Scalar>& x) const = 0;
};

/// x + conv(lrelu(conv(x))).
template <typename Scalar>
class ResidualBlock final : public Block<Scalar> {
 public:
  ResidualBlock(ParameterStore<Scalar>& store, const std::string& name, Index channels, Index kernel = 3)
      : conv1_(store, name + ".conv1", channels, channels, kernel),
        conv2_(store, name + ".conv2", channels, channels, kernel) {}

  Var<Scalar> branch(const Var<Scalar>& x) const { return conv2_(lrelu(conv1_(x))); }
  Var<Scalar> operator()(const Var<Scalar>& x) const override { return add(x, branch(x)); }

 private:
  Conv<Scalar> conv1_, conv2_;
};

/// `depth` residual blocks in series with an outer shortcut.
template <typename Scalar>
class ConcatenatedResidualBlock final : public Block<Scalar> {
 public:
  ConcatenatedResidualBlock(ParameterStore<Scalar>& store, const std::string& name, Index channels, int depth) {
    for (int i = 0; i < depth; ++i) blocks_.emplace_back(store, name + ".rb" + std::to_string(i), channels);
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const override {
    Var<Scalar> h = x;
    for (const auto& b : blocks_) h = b(h);
    return add(x, h);
  }

 private:
  std::vector<ResidualBlock<Scalar>> blocks_;
};

/// Two plain-convolution branches with cross concatenation, 1x1 fusion and
/// an outer shortcut.
template <typename Scalar>
class OriginalMsrb final : public Block<Scalar> {
 public:
  OriginalMsrb(ParameterStore<Scalar>& store, const std::string& name, Index channels, std::array<int, 2> k)
      : a1_(store, name + ".branch_a1", channels, channels, k[0]),
        b1_(store, name + ".branch_b1", channels, channels, k[1]),
        a2_(store, name + ".branch_a2", 2 * channels, 2 * channels, k[0]),
        b2_(store, name + ".branch_b2", 2 * channels, 2 * channels, k[1]),
        fuse_(store, name + ".fuse", 4 * channels, channels, 1) {}

  std::array<Var<Scalar>, 2> first_stage(const Var<Scalar>& x) const { return {lrelu(a1_(x)), lrelu(b1_(x))}; }

  Var<Scalar> operator()(const Var<Scalar>& x) const override {
    auto [s1, p1] = first_stage(x);
    auto s2 = lrelu(a2_(concat_channels<Scalar>({s1, p1})));
    auto p2 = lrelu(b2_(concat_channels<Scalar>({p1, s1})));
    return add(x, fuse_(concat_channels<Scalar>({s2, p2})));
  }

 private:
  Conv<Scalar> a1_, b1_, a2_, b2_, fuse_;
};

/// Two residual-block branches (kernels k1, k2). Their outputs are
/// concatenated, reduced by 1x1 convolutions to half width per branch,
/// refined by a second residual block per branch, concatenated again and
/// fused by a 1x1 convolution followed by GDN; an outer shortcut closes it.
template <typename Scalar>
class ImprovedMsrb final : public Block<Scalar> {
 public:
  ImprovedMsrb(ParameterStore<Scalar>& store, const std::string& name, Index channels, std::array<int, 2> k)
      : a1_(store, name + ".branch_a1", channels, k[0]),
        b1_(store, name + ".branch_b1", channels, k[1]),
        reduce_a_(store, name + ".reduce_a", 2 * channels, channels / 2, 1),
        reduce_b_(store, name + ".reduce_b", 2 * channels, channels / 2, 1),
        a2_(store, name + ".branch_a2", channels / 2, k[0]),
        b2_(store, name + ".branch_b2", channels / 2, k[1]),
        fuse_(store, name + ".fuse", channels, channels, 1),
        gdn_(store, name + ".gdn", channels, false) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const override {
    auto joined = concat_channels<Scalar>({a1_(x), b1_(x)});
    auto a = a2_(reduce_a_(joined));
    auto b = b2_(reduce_b_(joined));
    return add(x, gdn_(fuse_(concat_channels<Scalar>({a, b}))));
  }

 private:
  ResidualBlock<Scalar> a1_, b1_;
  Conv<Scalar> reduce_a_, reduce_b_;
  ResidualBlock<Scalar> a2_, b2_;
  Conv<Scalar> fuse_;
  Gdn<Scalar> gdn_;
};

/// x + trunk(x) * sigmoid(mask(x)); trunk and mask are residual stacks, the
/// mask ending in a 1x1 convolution.
template <typename Scalar>
class AttentionModule final : public Block<Scalar> {
 public:
  AttentionModule(ParameterStore<Scalar>& store, const std::string& name, Index channels, int depth = 3) {
    for (int i = 0; i < depth; ++i) {
      trunk_.emplace_back(store, name + ".trunk" + std::to_string(i), channels);
      mask_.emplace_back(store, name + ".mask" + std::to_string(i), channels);
    }
    mask_out_ = Conv<Scalar>(store, name + ".mask_out", channels, channels, 1);
  }

  Var<Scalar> gate(const Var<Scalar>& x) const {
    Var<Scalar> m = x;
    for (const auto& b : mask_) m = b(m);
    return sigmoid(mask_out_(m));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const override {
    Var<Scalar> t = x;
    for (const auto& b : trunk_) t = b(t);
    return add(x, mul(t, gate(x)));
  }

 private:
  std::vector<ResidualBlock<Scalar>> trunk_, mask_;
  Conv<Scalar> mask_out_;
};

template <typename Scalar>
std::unique_ptr<Block<Scalar>> make_block(ParameterStore<Scalar>& store, const std::string& name,
                                          const BlockConfig& config) {
  config.validate();
  switch (config.kind) {
    case BlockKind::ResidualBlock:
      return std::make_unique<ResidualBlock<Scalar>>(store, name, config.channels);
    case BlockKind::Crb:
      return std::make_unique<ConcatenatedResidualBlock<Scalar>>(store, name, config.channels, config.crb_depth);
    case BlockKind::OriginalMsrb:
      return std::make_unique<OriginalMsrb<Scalar>>(store, name, config.channels, config.branch_kernels);
    case BlockKind::ImprovedMsrb:
      return std::make_unique<ImprovedMsrb<Scalar>>(store, name, config.channels, config.branch_kernels);
  }
  throw std::invalid_argument("unknown block kind");
}

}  // namespace asymcodec

#endif  // ASYMCODEC_BLOCKS_HPP
