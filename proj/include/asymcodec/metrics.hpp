#ifndef ASYMCODEC_METRICS_HPP
#define ASYMCODEC_METRICS_HPP

#include <array>
#include <cstddef>
#include <vector>

#include "asymcodec/autodiff.hpp"
#include "asymcodec/ops.hpp"

namespace asymcodec {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 100.0;

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = (0.01 * 255) * (0.01 * 255);
inline constexpr double kSsimC2 = (0.03 * 255) * (0.03 * 255);

struct RdPoint {
  double bpp = 0;
  double psnr_db = 0;
  double msssim = 0;
  double msssim_db = 0;

  static RdPoint make(double bpp, double psnr_db, double msssim);
};

/// -10 log10(1 - msssim), capped like PSNR when msssim reaches 1.
double msssim_to_db(double msssim);

/// PSNR in dB of two same-shaped tensors on the [0, 255] scale.
double psnr(const TensorD& a, const TensorD& b);

/// Number of MS-SSIM scales an image of this size supports (at most 5):
/// the coarsest scale must still hold a full window.
int ms_ssim_scales(Index height, Index width);

/// Normalized 1-D Gaussian taps of the SSIM window.
std::array<double, kSsimWindow> ssim_gaussian();

/// MS-SSIM on the [0, 255] scale, computed per channel and averaged over
/// channels and batch. Images smaller than 176 pixels on a side use fewer
/// scales with the leading weights renormalized. Throws ShapeError when
/// the image cannot hold a single window.
double ms_ssim(const TensorD& a, const TensorD& b);

/// 8 * bytes / (width * height).
double bits_per_pixel(std::size_t bytes, Index width, Index height);

/// Bjontegaard delta rate of `test` against `anchor` in percent: cubic fit
/// of log10(rate) over PSNR, integrated over the shared PSNR interval.
/// Falls back to piecewise cubic Hermite interpolation when either cubic is
/// not monotone there. Throws std::invalid_argument on fewer than four
/// points, non-increasing rates, or disjoint quality ranges.
double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test);

/// Differentiable MS-SSIM of (B, C, H, W) inputs on the [0, 255] scale;
/// the same definition as ms_ssim, with negative contrast terms clamped to a
/// small positive floor so the fractional powers stay differentiable.
template <typename Scalar>
Var<Scalar> ms_ssim_var(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "ms_ssim");
  const Shape& s = a.shape();
  const int scales = ms_ssim_scales(s.height(), s.width());
  const auto g = ssim_gaussian();
  Tensor<Scalar> k(Shape(s.channels(), 1, kSsimWindow, kSsimWindow));
  for (Index c = 0; c < s.channels(); ++c) {
    for (int i = 0; i < kSsimWindow; ++i) {
      for (int j = 0; j < kSsimWindow; ++j) k(c, 0, i, j) = static_cast<Scalar>(g[i] * g[j]);
    }
  }
  const auto kernel = Var<Scalar>::constant(std::move(k));
  auto blur = [&](const Var<Scalar>& x) { return depthwise_conv2d(x, kernel, Var<Scalar>(), Padding::Valid); };

  double weight_total = 0;
  for (int i = 0; i < scales; ++i) weight_total += kMsSsimWeights[i];

  Var<Scalar> x = a, y = b, product;
  for (int level = 0; level < scales; ++level) {
    if (level > 0) {
      x = avg_pool2(x);
      y = avg_pool2(y);
    }
    auto mx = blur(x), my = blur(y);
    auto mxx = mul(mx, mx), myy = mul(my, my), mxy = mul(mx, my);
    auto vx = sub(blur(mul(x, x)), mxx);
    auto vy = sub(blur(mul(y, y)), myy);
    auto cov = sub(blur(mul(x, y)), mxy);
    const auto c1 = static_cast<Scalar>(kSsimC1), c2 = static_cast<Scalar>(kSsimC2);
    auto cs_map = div(add_scalar(scale(cov, Scalar(2)), c2), add_scalar(add(vx, vy), c2));
    Var<Scalar> term = mean_spatial(cs_map);
    if (level == scales - 1) {
      auto lum = div(add_scalar(scale(mxy, Scalar(2)), c1), add_scalar(add(mxx, myy), c1));
      term = mean_spatial(mul(lum, cs_map));
    }
    term = clamp(term, Scalar(1e-6), Scalar(1));
    term = pow(term, static_cast<Scalar>(kMsSsimWeights[level] / weight_total));
    product = product.defined() ? mul(product, term) : term;
  }
  return mean(product);
}

}  // namespace asymcodec

#endif  // ASYMCODEC_METRICS_HPP
