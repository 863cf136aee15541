#ifndef ASYMCODEC_QUANTIZATION_HPP
#define ASYMCODEC_QUANTIZATION_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "asymcodec/ops.hpp"
#include "asymcodec/parameters.hpp"

namespace asymcodec {

inline constexpr int kSymbolMin = -2048;
inline constexpr int kSymbolMax = 2047;

class SymbolRangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

/// Fills a tensor with i.i.d. U[-0.5, 0.5) draws from `seed`.
template <typename Scalar>
Tensor<Scalar> uniform_noise(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(unit_uniform(rng) - 0.5);
  return t;
}

/// Training surrogate: y + u, u ~ U[-0.5, 0.5). Gradient passes unchanged.
template <typename Scalar>
Var<Scalar> quantize_train(const Var<Scalar>& y, std::uint64_t seed) {
  return add(y, Var<Scalar>::constant(uniform_noise<Scalar>(y.shape(), seed)));
}

/// Round half away from zero. Throws SymbolRangeError when a result falls
/// outside the codable symbol range.
template <typename Scalar>
Tensor<Scalar> quantize_infer(const Tensor<Scalar>& y) {
  Tensor<Scalar> out(y.shape());
  for (Index i = 0; i < y.size(); ++i) {
    const Scalar r = std::round(y[i]);
    if (!(r >= kSymbolMin && r <= kSymbolMax)) {
      throw SymbolRangeError("latent value " + std::to_string(static_cast<double>(y[i])) +
                             " outside codable range [" + std::to_string(kSymbolMin) + ", " +
                             std::to_string(kSymbolMax) + "]");
    }
    out[i] = r;
  }
  return out;
}

/// Depthwise 3x3 post-quantization filter, identity-initialized.
template <typename Scalar>
class PostQuantFilter {
 public:
  PostQuantFilter() = default;
  PostQuantFilter(ParameterStore<Scalar>& store, Index channels) {
    Tensor<Scalar> k(Shape(channels, 1, 3, 3));
    for (Index c = 0; c < channels; ++c) k(c, 0, 1, 1) = Scalar(1);
    kernel_ = store.add("pqf.kernel", std::move(k));
    bias_ = store.add_constant("pqf.bias", Shape(1, channels, 1, 1), Scalar(0));
  }

  bool defined() const { return kernel_.defined(); }

  Var<Scalar> operator()(const Var<Scalar>& y_hat) const {
    return depthwise_conv2d(y_hat, kernel_, bias_, Padding::SameReflect);
  }

  /// Same filter with its parameters cut from the graph.
  Var<Scalar> frozen(const Var<Scalar>& y_hat) const {
    return depthwise_conv2d(y_hat, kernel_.detach(), bias_.detach(), Padding::SameReflect);
  }

  /// mean((F(y_hat) - y_tilde)^2) with y_hat and y_tilde held constant.
  Var<Scalar> loss(const Var<Scalar>& y_hat, const Var<Scalar>& y_tilde) const {
    detail::require_same_shape(y_hat.shape(), y_tilde.shape(), "pqf_loss");
    return mean(square(sub((*this)(y_hat.detach()), y_tilde.detach())));
  }

  const Var<Scalar>& kernel() const { return kernel_; }
  const Var<Scalar>& bias() const { return bias_; }

 private:
  Var<Scalar> kernel_, bias_;
};

}  // namespace asymcodec

#endif  // ASYMCODEC_QUANTIZATION_HPP
