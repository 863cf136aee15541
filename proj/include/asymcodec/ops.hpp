#ifndef ASYMCODEC_OPS_HPP
#define ASYMCODEC_OPS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "asymcodec/autodiff.hpp"
#include "asymcodec/tensor.hpp"

namespace asymcodec {

enum class Padding {
  SameReflect,  // output = ceil(in / stride), borders mirrored
  Zero,         // output = ceil(in / stride), borders zero
  Valid,        // output = (in - k) / stride + 1
};

struct ConvOptions {
  int stride = 1;
  Padding padding = Padding::Zero;
};

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

/// Maps every (tap, output pixel) of a convolution window to a source pixel
/// index in the input plane, or -1 for zero padding.
struct ConvGeometry {
  Index in_h = 0, in_w = 0, out_h = 0, out_w = 0, kh = 0, kw = 0;
  std::vector<Index> source;

  Index taps() const { return kh * kw; }
  Index out_plane() const { return out_h * out_w; }
  Index in_plane() const { return in_h * in_w; }
};

inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

inline ConvGeometry make_geometry(Index in_h, Index in_w, Index kh, Index kw, const ConvOptions& opt) {
  require(opt.stride == 1 || opt.stride == 2, "conv: stride must be 1 or 2, got " + std::to_string(opt.stride));
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kh = kh;
  g.kw = kw;
  const Index s = opt.stride;
  Index pad_h = 0, pad_w = 0;
  if (opt.padding == Padding::Valid) {
    require(in_h >= kh && in_w >= kw, "conv: valid padding needs input >= kernel");
    g.out_h = (in_h - kh) / s + 1;
    g.out_w = (in_w - kw) / s + 1;
  } else {
    require(kh % 2 == 1 && kw % 2 == 1, "conv: same padding needs odd kernel sizes");
    pad_h = kh / 2;
    pad_w = kw / 2;
    g.out_h = (in_h + s - 1) / s;
    g.out_w = (in_w + s - 1) / s;
  }
  const bool reflect = opt.padding == Padding::SameReflect;
  g.source.resize(static_cast<std::size_t>(g.taps() * g.out_plane()));
  Index* dst = g.source.data();
  for (Index ky = 0; ky < kh; ++ky) {
    for (Index kx = 0; kx < kw; ++kx) {
      for (Index oy = 0; oy < g.out_h; ++oy) {
        for (Index ox = 0; ox < g.out_w; ++ox) {
          Index iy = oy * s + ky - pad_h;
          Index ix = ox * s + kx - pad_w;
          if (reflect) {
            iy = reflect_index(iy, in_h);
            ix = reflect_index(ix, in_w);
            *dst++ = iy * in_w + ix;
          } else if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) {
            *dst++ = -1;
          } else {
            *dst++ = iy * in_w + ix;
          }
        }
      }
    }
  }
  return g;
}

/// cols(c * taps + t, p) = plane_c[source(t, p)].
template <typename Scalar>
void im2col(const Scalar* planes, Index channels, const ConvGeometry& g, RowMatrix<Scalar>& cols) {
  const Index taps = g.taps(), op = g.out_plane(), ip = g.in_plane();
  cols.resize(channels * taps, op);
  for (Index c = 0; c < channels; ++c) {
    const Scalar* src = planes + c * ip;
    for (Index t = 0; t < taps; ++t) {
      Scalar* row = cols.data() + (c * taps + t) * op;
      const Index* idx = g.source.data() + t * op;
      for (Index p = 0; p < op; ++p) row[p] = idx[p] >= 0 ? src[idx[p]] : Scalar(0);
    }
  }
}

/// Adjoint of im2col: scatters and accumulates columns back into planes.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, Index channels, const ConvGeometry& g, Scalar* planes) {
  const Index taps = g.taps(), op = g.out_plane(), ip = g.in_plane();
  for (Index c = 0; c < channels; ++c) {
    Scalar* dst = planes + c * ip;
    for (Index t = 0; t < taps; ++t) {
      const Scalar* row = cols.data() + (c * taps + t) * op;
      const Index* idx = g.source.data() + t * op;
      for (Index p = 0; p < op; ++p) {
        if (idx[p] >= 0) dst[idx[p]] += row[p];
      }
    }
  }
}

template <typename Scalar>
void check_bias(const Var<Scalar>& bias, Index channels, const char* op) {
  if (!bias.defined()) return;
  require(bias.shape() == Shape(1, channels, 1, 1),
          std::string(op) + ": bias shape " + bias.shape().str() + " expected (1," + std::to_string(channels) + ",1,1)");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolutions

/// Cross-correlation with kernel (out_ch, in_ch, kh, kw) and optional bias (1, out_ch, 1, 1).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& kernel, const Var<Scalar>& bias,
                   const ConvOptions& opt) {
  using Mat = detail::RowMatrix<Scalar>;
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  detail::require(ks.channels() == xs.channels(), "conv2d: input channels " + std::to_string(xs.channels()) +
                                                      " != kernel in_ch " + std::to_string(ks.channels()));
  const Index out_ch = ks.batch();
  detail::check_bias(bias, out_ch, "conv2d");
  auto geom = std::make_shared<detail::ConvGeometry>(detail::make_geometry(xs.height(), xs.width(), ks.height(), ks.width(), opt));

  const Index in_ch = xs.channels();
  const Index kcols = in_ch * geom->taps();
  Tensor<Scalar> out(Shape(xs.batch(), out_ch, geom->out_h, geom->out_w));
  Eigen::Map<const Mat> kmat(kernel.value().data(), out_ch, kcols);
  Mat cols;
  for (Index n = 0; n < xs.batch(); ++n) {
    detail::im2col(input.value().plane_data(n, 0), in_ch, *geom, cols);
    auto o = out.item(n);
    o.noalias() = kmat * cols;
    if (bias.defined()) {
      o.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.value().data(), out_ch);
    }
  }

  std::vector<Var<Scalar>> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  return make_result<Scalar>(std::move(out), std::move(parents),
                             [geom, in_ch, out_ch, kcols](const Node<Scalar>& self, const Tensor<Scalar>& g,
                                                          std::vector<Tensor<Scalar>*>& gin) {
                               const auto& x = self.parents[0]->value;
                               const auto& k = self.parents[1]->value;
                               Eigen::Map<const Mat> kmat(k.data(), out_ch, kcols);
                               Mat cols, dcols;
                               for (Index n = 0; n < x.batch(); ++n) {
                                 auto go = g.item(n);
                                 if (gin[1]) {
                                   detail::im2col(x.plane_data(n, 0), in_ch, *geom, cols);
                                   Eigen::Map<Mat> dk(gin[1]->data(), out_ch, kcols);
                                   dk.noalias() += go * cols.transpose();
                                 }
                                 if (gin[0]) {
                                   dcols.noalias() = kmat.transpose() * go;
                                   detail::col2im(dcols, in_ch, *geom, gin[0]->plane_data(n, 0));
                                 }
                                 if (gin.size() > 2 && gin[2]) {
                                   Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(gin[2]->data(), out_ch);
                                   db += go.rowwise().sum();
                                 }
                               }
                             });
}

/// Adjoint of a zero-padded "same" conv2d. Kernel (in_ch, out_ch, kh, kw);
/// output spatial size is input * stride.
template <typename Scalar>
Var<Scalar> conv2d_transpose(const Var<Scalar>& input, const Var<Scalar>& kernel, const Var<Scalar>& bias,
                             int stride) {
  using Mat = detail::RowMatrix<Scalar>;
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  detail::require(ks.batch() == xs.channels(), "conv2d_transpose: input channels " + std::to_string(xs.channels()) +
                                                   " != kernel in_ch " + std::to_string(ks.batch()));
  const Index in_ch = xs.channels();
  const Index out_ch = ks.channels();
  detail::check_bias(bias, out_ch, "conv2d_transpose");
  const Index oh = xs.height() * stride, ow = xs.width() * stride;
  auto geom = std::make_shared<detail::ConvGeometry>(
      detail::make_geometry(oh, ow, ks.height(), ks.width(), ConvOptions{stride, Padding::Zero}));
  const Index kcols = out_ch * geom->taps();

  Tensor<Scalar> out(Shape(xs.batch(), out_ch, oh, ow));
  Eigen::Map<const Mat> kmat(kernel.value().data(), in_ch, kcols);
  Mat cols;
  for (Index n = 0; n < xs.batch(); ++n) {
    cols.noalias() = kmat.transpose() * input.value().item(n);
    detail::col2im(cols, out_ch, *geom, out.plane_data(n, 0));
    if (bias.defined()) {
      out.item(n).colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.value().data(), out_ch);
    }
  }

  std::vector<Var<Scalar>> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  return make_result<Scalar>(std::move(out), std::move(parents),
                             [geom, in_ch, out_ch, kcols](const Node<Scalar>& self, const Tensor<Scalar>& g,
                                                          std::vector<Tensor<Scalar>*>& gin) {
                               const auto& x = self.parents[0]->value;
                               const auto& k = self.parents[1]->value;
                               Eigen::Map<const Mat> kmat(k.data(), in_ch, kcols);
                               Mat gcols;
                               for (Index n = 0; n < x.batch(); ++n) {
                                 detail::im2col(g.plane_data(n, 0), out_ch, *geom, gcols);
                                 if (gin[0]) gin[0]->item(n).noalias() += kmat * gcols;
                                 if (gin[1]) {
                                   Eigen::Map<Mat> dk(gin[1]->data(), in_ch, kcols);
                                   dk.noalias() += x.item(n) * gcols.transpose();
                                 }
                                 if (gin.size() > 2 && gin[2]) {
                                   Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(gin[2]->data(), out_ch);
                                   db += g.item(n).rowwise().sum();
                                 }
                               }
                             });
}

/// Per-channel convolution with kernel (channels, 1, kh, kw), stride 1.
template <typename Scalar>
Var<Scalar> depthwise_conv2d(const Var<Scalar>& input, const Var<Scalar>& kernel, const Var<Scalar>& bias,
                             Padding padding) {
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  const Index channels = xs.channels();
  detail::require(ks.batch() == channels && ks.channels() == 1,
                  "depthwise_conv2d: kernel shape " + ks.str() + " does not match " + std::to_string(channels) +
                      " channels");
  detail::check_bias(bias, channels, "depthwise_conv2d");
  auto geom = std::make_shared<detail::ConvGeometry>(
      detail::make_geometry(xs.height(), xs.width(), ks.height(), ks.width(), ConvOptions{1, padding}));
  const Index taps = geom->taps(), op = geom->out_plane();

  Tensor<Scalar> out(Shape(xs.batch(), channels, geom->out_h, geom->out_w));
  for (Index n = 0; n < xs.batch(); ++n) {
    for (Index c = 0; c < channels; ++c) {
      const Scalar* src = input.value().plane_data(n, c);
      const Scalar* k = kernel.value().data() + c * taps;
      Scalar* dst = out.plane_data(n, c);
      const Scalar b = bias.defined() ? bias.value()[c] : Scalar(0);
      for (Index p = 0; p < op; ++p) dst[p] = b;
      for (Index t = 0; t < taps; ++t) {
        const Index* idx = geom->source.data() + t * op;
        const Scalar w = k[t];
        for (Index p = 0; p < op; ++p) {
          if (idx[p] >= 0) dst[p] += w * src[idx[p]];
        }
      }
    }
  }

  std::vector<Var<Scalar>> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  return make_result<Scalar>(
      std::move(out), std::move(parents),
      [geom, channels, taps, op](const Node<Scalar>& self, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
        const auto& x = self.parents[0]->value;
        const auto& k = self.parents[1]->value;
        for (Index n = 0; n < x.batch(); ++n) {
          for (Index c = 0; c < channels; ++c) {
            const Scalar* go = g.plane_data(n, c);
            const Scalar* src = x.plane_data(n, c);
            for (Index t = 0; t < taps; ++t) {
              const Index* idx = geom->source.data() + t * op;
              if (gin[1]) {
                Scalar acc = 0;
                for (Index p = 0; p < op; ++p) {
                  if (idx[p] >= 0) acc += go[p] * src[idx[p]];
                }
                (*gin[1])[c * taps + t] += acc;
              }
              if (gin[0]) {
                Scalar* dx = gin[0]->plane_data(n, c);
                const Scalar w = k[c * taps + t];
                for (Index p = 0; p < op; ++p) {
                  if (idx[p] >= 0) dx[idx[p]] += w * go[p];
                }
              }
            }
            if (gin.size() > 2 && gin[2]) {
              Scalar acc = 0;
              for (Index p = 0; p < op; ++p) acc += go[p];
              (*gin[2])[c] += acc;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Generalized divisive normalization

/// gdn:  y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)
/// igdn: y_i = x_i * sqrt(beta_i + sum_j gamma_ij x_j^2)
/// beta is (1, C, 1, 1) and gamma is (C, C, 1, 1), both already in their
/// constrained (positive / non-negative) form.
template <typename Scalar>
Var<Scalar> generalized_divisive_norm(const Var<Scalar>& input, const Var<Scalar>& beta, const Var<Scalar>& gamma,
                                      bool inverse) {
  using Mat = detail::RowMatrix<Scalar>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Shape& xs = input.shape();
  const Index c = xs.channels();
  detail::require(beta.shape() == Shape(1, c, 1, 1), "gdn: beta shape " + beta.shape().str());
  detail::require(gamma.shape() == Shape(c, c, 1, 1), "gdn: gamma shape " + gamma.shape().str());
  if (!input.value().all_finite()) throw std::domain_error("gdn: non-finite input");

  Tensor<Scalar> out(xs);
  Eigen::Map<const Mat> gm(gamma.value().data(), c, c);
  Eigen::Map<const Vec> bv(beta.value().data(), c);
  Mat norm;
  for (Index n = 0; n < xs.batch(); ++n) {
    auto x = input.value().item(n);
    norm.noalias() = gm * x.array().square().matrix();
    norm.colwise() += bv;
    if (inverse) {
      out.item(n) = x.array() * norm.array().sqrt();
    } else {
      out.item(n) = x.array() * norm.array().rsqrt();
    }
  }

  return make_result<Scalar>(
      std::move(out), {input, beta, gamma},
      [c, inverse](const Node<Scalar>& self, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
        const auto& xv = self.parents[0]->value;
        Eigen::Map<const Mat> gm(self.parents[2]->value.data(), c, c);
        Eigen::Map<const Vec> bv(self.parents[1]->value.data(), c);
        Mat x2, norm, t;
        for (Index n = 0; n < xv.batch(); ++n) {
          auto x = xv.item(n);
          auto go = g.item(n);
          x2 = x.array().square().matrix();
          norm.noalias() = gm * x2;
          norm.colwise() += bv;
          // t = dL/dnorm
          if (inverse) {
            t = (go.array() * x.array() * Scalar(0.5) * norm.array().rsqrt()).matrix();
          } else {
            t = (go.array() * x.array() * Scalar(-0.5) * norm.array().rsqrt() / norm.array()).matrix();
          }
          if (gin[0]) {
            auto dx = gin[0]->item(n);
            if (inverse) {
              dx.array() += go.array() * norm.array().sqrt();
            } else {
              dx.array() += go.array() * norm.array().rsqrt();
            }
            dx.array() += Scalar(2) * x.array() * (gm.transpose() * t).array();
          }
          if (gin[1]) Eigen::Map<Vec>(gin[1]->data(), c) += t.rowwise().sum();
          if (gin[2]) Eigen::Map<Mat>(gin[2]->data(), c, c).noalias() += t * x2.transpose();
        }
      });
}

template <typename Scalar>
Var<Scalar> gdn(const Var<Scalar>& input, const Var<Scalar>& beta, const Var<Scalar>& gamma) {
  return generalized_divisive_norm(input, beta, gamma, false);
}

template <typename Scalar>
Var<Scalar> igdn(const Var<Scalar>& input, const Var<Scalar>& beta, const Var<Scalar>& gamma) {
  return generalized_divisive_norm(input, beta, gamma, true);
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

/// y = f(x), dy/dx = df(x, y), both as Eigen array expressions.
template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(const Var<Scalar>& x, F f, DF df) {
  Tensor<Scalar> out(x.shape(), f(x.value().array()));
  return make_result<Scalar>(std::move(out), {x},
                             [df](const Node<Scalar>& self, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               gin[0]->array() += g.array() * df(self.parents[0]->value.array(), self.value.array());
                             });
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope = Scalar(0.2)) {
  return detail::unary(
      x, [slope](const auto& a) { return (a > Scalar(0)).select(a, a * slope); },
      [slope](const auto& a, const auto&) {
        return (a > Scalar(0)).select(Tensor<Scalar>::Array::Ones(a.size()), slope);
      });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return detail::unary(
      x, [](const auto& a) { return a.max(Scalar(0)); },
      [](const auto& a, const auto&) { return (a > Scalar(0)).template cast<Scalar>(); });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  return detail::unary(
      x, [](const auto& a) { return a.tanh(); }, [](const auto&, const auto& y) { return Scalar(1) - y.square(); });
}

/// n / (|n| + 1)
template <typename Scalar>
Var<Scalar> softsign(const Var<Scalar>& x) {
  return detail::unary(
      x, [](const auto& a) { return a / (a.abs() + Scalar(1)); },
      [](const auto& a, const auto&) { return (a.abs() + Scalar(1)).square().inverse(); });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return detail::unary(
      x, [](const auto& a) { return ((-a).exp() + Scalar(1)).inverse(); },
      [](const auto&, const auto& y) { return y * (Scalar(1) - y); });
}

/// log(1 + e^x), evaluated without overflow.
template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x) {
  return detail::unary(
      x, [](const auto& a) { return a.max(Scalar(0)) + ((-a.abs()).exp() + Scalar(1)).log(); },
      [](const auto& a, const auto&) { return ((-a).exp() + Scalar(1)).inverse(); });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& x) {
  return detail::unary(
      x, [](const auto& a) { return a.square(); }, [](const auto& a, const auto&) { return Scalar(2) * a; });
}

template <typename Scalar>
Var<Scalar> pow(const Var<Scalar>& x, Scalar exponent) {
  return detail::unary(
      x, [exponent](const auto& a) { return a.pow(exponent); },
      [exponent](const auto& a, const auto&) { return exponent * a.pow(exponent - Scalar(1)); });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor) {
  return detail::unary(
      x, [factor](const auto& a) { return a * factor; },
      [factor](const auto& a, const auto&) { return Tensor<Scalar>::Array::Constant(a.size(), factor); });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& x, Scalar offset) {
  return detail::unary(
      x, [offset](const auto& a) { return a + offset; },
      [](const auto& a, const auto&) { return Tensor<Scalar>::Array::Ones(a.size()); });
}

/// Clamps to [lo, hi]; gradient passes only where the input is inside.
template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& x, Scalar lo, Scalar hi) {
  return detail::unary(
      x, [lo, hi](const auto& a) { return a.max(lo).min(hi); },
      [lo, hi](const auto& a, const auto&) { return ((a >= lo) && (a <= hi)).template cast<Scalar>(); });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return make_result<Scalar>(std::move(out), {a, b},
                             [](const Node<Scalar>&, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               if (gin[0]) gin[0]->array() += g.array();
                               if (gin[1]) gin[1]->array() += g.array();
                             });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape(), a.value().array() - b.value().array());
  return make_result<Scalar>(std::move(out), {a, b},
                             [](const Node<Scalar>&, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               if (gin[0]) gin[0]->array() += g.array();
                               if (gin[1]) gin[1]->array() -= g.array();
                             });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  return make_result<Scalar>(std::move(out), {a, b},
                             [](const Node<Scalar>& self, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               if (gin[0]) gin[0]->array() += g.array() * self.parents[1]->value.array();
                               if (gin[1]) gin[1]->array() += g.array() * self.parents[0]->value.array();
                             });
}

template <typename Scalar>
Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "div");
  Tensor<Scalar> out(a.shape(), a.value().array() / b.value().array());
  return make_result<Scalar>(std::move(out), {a, b},
                             [](const Node<Scalar>& self, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               const auto& bv = self.parents[1]->value.array();
                               if (gin[0]) gin[0]->array() += g.array() / bv;
                               if (gin[1]) gin[1]->array() -= g.array() * self.value.array() / bv;
                             });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out = Tensor<Scalar>::scalar(x.value().array().sum());
  return make_result<Scalar>(std::move(out), {x},
                             [](const Node<Scalar>&, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               gin[0]->array() += g[0];
                             });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  detail::require(x.value().size() > 0, "mean of empty tensor");
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.value().size()));
}

/// Mean over (h, w) per (n, c); result (N, C, 1, 1).
template <typename Scalar>
Var<Scalar> mean_spatial(const Var<Scalar>& x) {
  const Shape& xs = x.shape();
  Tensor<Scalar> out(Shape(xs.batch(), xs.channels(), 1, 1));
  const Index plane = xs.plane();
  for (Index n = 0; n < xs.batch(); ++n) {
    for (Index c = 0; c < xs.channels(); ++c) {
      out(n, c, 0, 0) = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(x.value().plane_data(n, c), plane).mean();
    }
  }
  return make_result<Scalar>(std::move(out), {x},
                             [plane](const Node<Scalar>&, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               const Shape& s = gin[0]->shape();
                               for (Index n = 0; n < s.batch(); ++n) {
                                 for (Index c = 0; c < s.channels(); ++c) {
                                   Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gin[0]->plane_data(n, c), plane) +=
                                       g(n, c, 0, 0) / static_cast<Scalar>(plane);
                                 }
                               }
                             });
}

/// Channel concatenation.
template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  Index total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    detail::require(s.batch() == first.batch() && s.height() == first.height() && s.width() == first.width(),
                    "concat_channels: incompatible shapes " + first.str() + " vs " + s.str());
    total += s.channels();
  }
  Tensor<Scalar> out(Shape(first.batch(), total, first.height(), first.width()));
  const Index plane = first.plane();
  for (Index n = 0; n < first.batch(); ++n) {
    Index at = 0;
    for (const auto& p : parts) {
      const Index len = p.shape().channels() * plane;
      std::copy_n(p.value().plane_data(n, 0), len, out.plane_data(n, at));
      at += p.shape().channels();
    }
  }
  return make_result<Scalar>(std::move(out), parts,
                             [plane](const Node<Scalar>& self, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               for (Index n = 0; n < g.batch(); ++n) {
                                 Index at = 0;
                                 for (std::size_t i = 0; i < self.parents.size(); ++i) {
                                   const Index ch = self.parents[i]->value.channels();
                                   if (gin[i]) {
                                     Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gin[i]->plane_data(n, 0), ch * plane) +=
                                         Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g.plane_data(n, at), ch * plane);
                                   }
                                   at += ch;
                                 }
                               }
                             });
}

/// Channels [begin, begin + count).
template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, Index begin, Index count) {
  const Shape& xs = x.shape();
  detail::require(begin >= 0 && count >= 0 && begin + count <= xs.channels(),
                  "slice_channels: range out of bounds for " + xs.str());
  const Index plane = xs.plane();
  Tensor<Scalar> out(Shape(xs.batch(), count, xs.height(), xs.width()));
  for (Index n = 0; n < xs.batch(); ++n) {
    std::copy_n(x.value().plane_data(n, begin), count * plane, out.plane_data(n, 0));
  }
  return make_result<Scalar>(std::move(out), {x},
                             [begin, count, plane](const Node<Scalar>&, const Tensor<Scalar>& g,
                                                   std::vector<Tensor<Scalar>*>& gin) {
                               for (Index n = 0; n < g.batch(); ++n) {
                                 Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gin[0]->plane_data(n, begin), count * plane) +=
                                     Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g.plane_data(n, 0), count * plane);
                               }
                             });
}

/// Repeats a (1, C, 1, 1) tensor over the batch and spatial dimensions of `target`.
template <typename Scalar>
Var<Scalar> broadcast_channels(const Var<Scalar>& x, const Shape& target) {
  detail::require(x.shape() == Shape(1, target.channels(), 1, 1),
                  "broadcast_channels: " + x.shape().str() + " cannot broadcast to " + target.str());
  Tensor<Scalar> out(target);
  const Index plane = target.plane();
  for (Index n = 0; n < target.batch(); ++n) {
    for (Index c = 0; c < target.channels(); ++c) {
      std::fill_n(out.plane_data(n, c), plane, x.value()[c]);
    }
  }
  return make_result<Scalar>(std::move(out), {x},
                             [plane](const Node<Scalar>&, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               for (Index n = 0; n < g.batch(); ++n) {
                                 for (Index c = 0; c < g.channels(); ++c) {
                                   (*gin[0])[c] +=
                                       Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g.plane_data(n, c), plane).sum();
                                 }
                               }
                             });
}

/// 2x2 mean pooling with stride 2; odd trailing rows/columns are dropped.
template <typename Scalar>
Var<Scalar> avg_pool2(const Var<Scalar>& x) {
  const Shape& xs = x.shape();
  const Index oh = xs.height() / 2, ow = xs.width() / 2;
  detail::require(oh > 0 && ow > 0, "avg_pool2: input too small " + xs.str());
  Tensor<Scalar> out(Shape(xs.batch(), xs.channels(), oh, ow));
  for (Index n = 0; n < xs.batch(); ++n) {
    for (Index c = 0; c < xs.channels(); ++c) {
      for (Index i = 0; i < oh; ++i) {
        for (Index j = 0; j < ow; ++j) {
          const auto& v = x.value();
          out(n, c, i, j) = Scalar(0.25) * (v(n, c, 2 * i, 2 * j) + v(n, c, 2 * i, 2 * j + 1) +
                                            v(n, c, 2 * i + 1, 2 * j) + v(n, c, 2 * i + 1, 2 * j + 1));
        }
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x},
                             [oh, ow](const Node<Scalar>&, const Tensor<Scalar>& g, std::vector<Tensor<Scalar>*>& gin) {
                               auto& d = *gin[0];
                               for (Index n = 0; n < g.batch(); ++n) {
                                 for (Index c = 0; c < g.channels(); ++c) {
                                   for (Index i = 0; i < oh; ++i) {
                                     for (Index j = 0; j < ow; ++j) {
                                       const Scalar v = Scalar(0.25) * g(n, c, i, j);
                                       d(n, c, 2 * i, 2 * j) += v;
                                       d(n, c, 2 * i, 2 * j + 1) += v;
                                       d(n, c, 2 * i + 1, 2 * j) += v;
                                       d(n, c, 2 * i + 1, 2 * j + 1) += v;
                                     }
                                   }
                                 }
                               }
                             });
}

}  // namespace asymcodec

#endif  // ASYMCODEC_OPS_HPP
