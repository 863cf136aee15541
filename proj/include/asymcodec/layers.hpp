#ifndef ASYMCODEC_LAYERS_HPP
#define ASYMCODEC_LAYERS_HPP

#include <cmath>
#include <string>

#include "asymcodec/ops.hpp"
#include "asymcodec/parameters.hpp"

namespace asymcodec {

inline constexpr double kBetaMin = 1e-6;
inline constexpr double kLeakySlope = 0.2;

template <typename Scalar>
class Conv {
 public:
  Conv() = default;
  Conv(ParameterStore<Scalar>& store, const std::string& name, Index in_ch, Index out_ch, Index kernel,
       ConvOptions opt = {})
      : opt_(opt) {
    weight_ = store.add_uniform(name + ".weight", Shape(out_ch, in_ch, kernel, kernel), in_ch * kernel * kernel);
    bias_ = store.add_constant(name + ".bias", Shape(1, out_ch, 1, 1), Scalar(0));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight_, bias_, opt_); }

  const Var<Scalar>& weight() const { return weight_; }
  const Var<Scalar>& bias() const { return bias_; }

 private:
  Var<Scalar> weight_, bias_;
  ConvOptions opt_;
};

template <typename Scalar>
class ConvTranspose {
 public:
  ConvTranspose() = default;
  ConvTranspose(ParameterStore<Scalar>& store, const std::string& name, Index in_ch, Index out_ch, Index kernel,
                int stride)
      : stride_(stride) {
    // Each output pixel of a stride-s transpose sees ~ in_ch * k^2 / s^2 taps.
    const Index fan_in = std::max<Index>(1, in_ch * kernel * kernel / (stride * stride));
    weight_ = store.add_uniform(name + ".weight", Shape(in_ch, out_ch, kernel, kernel), fan_in);
    bias_ = store.add_constant(name + ".bias", Shape(1, out_ch, 1, 1), Scalar(0));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d_transpose(x, weight_, bias_, stride_); }

 private:
  Var<Scalar> weight_, bias_;
  int stride_ = 1;
};

/// GDN / IGDN with beta = raw_beta^2 + beta_min and gamma = raw_gamma^2.
template <typename Scalar>
class Gdn {
 public:
  Gdn() = default;
  Gdn(ParameterStore<Scalar>& store, const std::string& name, Index channels, bool inverse) : inverse_(inverse) {
    raw_beta_ = store.add_constant(name + ".beta", Shape(1, channels, 1, 1), Scalar(1));
    Tensor<Scalar> gamma(Shape(channels, channels, 1, 1));
    for (Index i = 0; i < channels; ++i) gamma(i, i, 0, 0) = static_cast<Scalar>(std::sqrt(0.1));
    raw_gamma_ = store.add(name + ".gamma", std::move(gamma));
  }

  Var<Scalar> beta() const { return add_scalar(square(raw_beta_), static_cast<Scalar>(kBetaMin)); }
  Var<Scalar> gamma() const { return square(raw_gamma_); }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return generalized_divisive_norm(x, beta(), gamma(), inverse_);
  }

 private:
  Var<Scalar> raw_beta_, raw_gamma_;
  bool inverse_ = false;
};

template <typename Scalar>
Var<Scalar> lrelu(const Var<Scalar>& x) {
  return leaky_relu(x, static_cast<Scalar>(kLeakySlope));
}

}  // namespace asymcodec

#endif  // ASYMCODEC_LAYERS_HPP
