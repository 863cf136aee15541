#ifndef ASYMCODEC_LIKELIHOOD_HPP
#define ASYMCODEC_LIKELIHOOD_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "asymcodec/autodiff.hpp"
#include "asymcodec/ops.hpp"

namespace asymcodec {

inline constexpr double kScaleMin = 0.11;
/// Likelihood floor used by the training rate estimate.
inline constexpr double kTrainLikelihoodFloor = 1e-9;

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Mass of N(mean, scale) on [lo, hi], evaluated on the tail nearer zero.
inline double normal_interval_mass(double lo, double hi, double mean, double scale) {
  const double a = (lo - mean) / scale;
  const double b = (hi - mean) / scale;
  if (a + b > 0) return normal_cdf(-a) - normal_cdf(-b);
  return normal_cdf(b) - normal_cdf(a);
}

inline double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Channel layout of a mixture head with K components over N latent channels:
/// [weight logits (K*N) | means (K*N) | raw scales (K*N)], component-major.
struct MixtureLayout {
  Index components = 1;
  Index latent_channels = 1;

  Index head_channels() const { return 3 * components * latent_channels; }
  Index logit(Index k, Index c) const { return k * latent_channels + c; }
  Index mean(Index k, Index c) const { return (components + k) * latent_channels + c; }
  Index raw_scale(Index k, Index c) const { return (2 * components + k) * latent_channels + c; }
};

/// One latent element's mixture after normalization.
struct MixtureSample {
  std::vector<double> weights, means, scales;
};

/// Softmax weights, means, and floored scales for element (n, c, y, x) of a head tensor.
template <typename Scalar>
void read_mixture(const Tensor<Scalar>& head, const MixtureLayout& layout, Index n, Index c, Index y, Index x,
                  MixtureSample& out) {
  const Index k_count = layout.components;
  out.weights.resize(k_count);
  out.means.resize(k_count);
  out.scales.resize(k_count);
  double max_logit = -INFINITY;
  for (Index k = 0; k < k_count; ++k) {
    out.weights[k] = static_cast<double>(head(n, layout.logit(k, c), y, x));
    max_logit = std::max(max_logit, out.weights[k]);
  }
  double total = 0;
  for (Index k = 0; k < k_count; ++k) {
    out.weights[k] = std::exp(out.weights[k] - max_logit);
    total += out.weights[k];
  }
  for (Index k = 0; k < k_count; ++k) {
    out.weights[k] /= total;
    out.means[k] = static_cast<double>(head(n, layout.mean(k, c), y, x));
    out.scales[k] = kScaleMin + softplus_scalar(static_cast<double>(head(n, layout.raw_scale(k, c), y, x)));
  }
}

/// Bits (-log2 likelihood) of `values` (B, N, H, W) under the discretized
/// Gaussian mixture described by `head` (B, 3KN, H, W): each value owns the
/// unit bin centred on it. Differentiable in both inputs; below `floor` the
/// likelihood is clamped and carries no gradient.
template <typename Scalar>
Var<Scalar> mixture_bits(const Var<Scalar>& values, const Var<Scalar>& head, const MixtureLayout& layout,
                         double floor = kTrainLikelihoodFloor) {
  const Shape& vs = values.shape();
  detail::require(vs.channels() == layout.latent_channels,
                  "mixture_bits: values have " + std::to_string(vs.channels()) + " channels, layout expects " +
                      std::to_string(layout.latent_channels));
  detail::require(head.shape() == Shape(vs.batch(), layout.head_channels(), vs.height(), vs.width()),
                  "mixture_bits: head shape " + head.shape().str() + " expected 3*K*N = " +
                      std::to_string(layout.head_channels()) + " channels at latent resolution");
  Tensor<Scalar> out(vs);
  MixtureSample mix;
  for (Index n = 0; n < vs.batch(); ++n) {
    for (Index c = 0; c < vs.channels(); ++c) {
      for (Index y = 0; y < vs.height(); ++y) {
        for (Index x = 0; x < vs.width(); ++x) {
          read_mixture(head.value(), layout, n, c, y, x, mix);
          const double v = static_cast<double>(values.value()(n, c, y, x));
          double p = 0;
          for (Index k = 0; k < layout.components; ++k) {
            p += mix.weights[k] * normal_interval_mass(v - 0.5, v + 0.5, mix.means[k], mix.scales[k]);
          }
          out(n, c, y, x) = static_cast<Scalar>(-std::log2(std::max(p, floor)));
        }
      }
    }
  }

  return make_result<Scalar>(
      std::move(out), {values, head},
      [layout, floor](const Node<Scalar>& self, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
        const auto& vt = self.parents[0]->value;
        const auto& ht = self.parents[1]->value;
        const Shape& vs = vt.shape();
        const Index k_count = layout.components;
        MixtureSample mix;
        std::vector<double> mass(k_count), dmass_dv(k_count), dmass_dscale(k_count);
        for (Index n = 0; n < vs.batch(); ++n) {
          for (Index c = 0; c < vs.channels(); ++c) {
            for (Index y = 0; y < vs.height(); ++y) {
              for (Index x = 0; x < vs.width(); ++x) {
                read_mixture(ht, layout, n, c, y, x, mix);
                const double v = static_cast<double>(vt(n, c, y, x));
                double p = 0;
                for (Index k = 0; k < k_count; ++k) {
                  const double s = mix.scales[k];
                  const double upper = (v + 0.5 - mix.means[k]) / s;
                  const double lower = (v - 0.5 - mix.means[k]) / s;
                  mass[k] = normal_interval_mass(v - 0.5, v + 0.5, mix.means[k], s);
                  const double pu = normal_pdf(upper), pl = normal_pdf(lower);
                  dmass_dv[k] = (pu - pl) / s;
                  dmass_dscale[k] = -(pu * upper - pl * lower) / s;
                  p += mix.weights[k] * mass[k];
                }
                if (p < floor) continue;
                const double dbits_dp = -static_cast<double>(g(n, c, y, x)) / (p * std::numbers::ln2);
                if (gin[0]) {
                  double dv = 0;
                  for (Index k = 0; k < k_count; ++k) dv += mix.weights[k] * dmass_dv[k];
                  (*gin[0])(n, c, y, x) += static_cast<Scalar>(dbits_dp * dv);
                }
                if (gin[1]) {
                  auto& dh = *gin[1];
                  for (Index k = 0; k < k_count; ++k) {
                    const double w = mix.weights[k];
                    dh(n, layout.logit(k, c), y, x) += static_cast<Scalar>(dbits_dp * w * (mass[k] - p));
                    dh(n, layout.mean(k, c), y, x) += static_cast<Scalar>(dbits_dp * w * -dmass_dv[k]);
                    const double raw = static_cast<double>(ht(n, layout.raw_scale(k, c), y, x));
                    dh(n, layout.raw_scale(k, c), y, x) +=
                        static_cast<Scalar>(dbits_dp * w * dmass_dscale[k] * sigmoid_scalar(raw));
                  }
                }
              }
            }
          }
        }
      });
}

}  // namespace asymcodec

#endif  // ASYMCODEC_LIKELIHOOD_HPP
