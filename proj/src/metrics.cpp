#include "asymcodec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace asymcodec {

RdPoint RdPoint::make(double bpp, double psnr_db, double msssim) {
  return RdPoint{bpp, psnr_db, msssim, msssim_to_db(msssim)};
}

double msssim_to_db(double msssim) {
  if (msssim >= 1.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(1.0 - msssim));
}

double psnr(const TensorD& a, const TensorD& b) {
  detail::require_same_shape(a.shape(), b.shape(), "psnr");
  const double mse = (a.array() - b.array()).square().mean();
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

int ms_ssim_scales(Index height, Index width) {
  const Index side = std::min(height, width);
  int scales = 0;
  for (Index s = side; scales < 5 && s >= kSsimWindow; s /= 2) ++scales;
  return scales;
}

std::array<double, kSsimWindow> ssim_gaussian() {
  std::array<double, kSsimWindow> g{};
  double total = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

namespace {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Valid-mode separable Gaussian filter.
Plane blur(const Plane& p, const std::array<double, kSsimWindow>& g) {
  const Index oh = p.rows() - kSsimWindow + 1, ow = p.cols() - kSsimWindow + 1;
  Plane rows = Plane::Zero(p.rows(), ow);
  for (int t = 0; t < kSsimWindow; ++t) rows += g[t] * p.middleCols(t, ow);
  Plane out = Plane::Zero(oh, ow);
  for (int t = 0; t < kSsimWindow; ++t) out += g[t] * rows.middleRows(t, oh);
  return out;
}

Plane downsample(const Plane& p) {
  const Index h = p.rows() / 2, w = p.cols() / 2;
  Plane out(h, w);
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      out(i, j) = 0.25 * (p(2 * i, 2 * j) + p(2 * i, 2 * j + 1) + p(2 * i + 1, 2 * j) + p(2 * i + 1, 2 * j + 1));
    }
  }
  return out;
}

// Mean contrast-structure term and mean SSIM of one scale.
std::pair<double, double> ssim_terms(const Plane& x, const Plane& y, const std::array<double, kSsimWindow>& g) {
  const Plane mx = blur(x, g), my = blur(y, g);
  const Plane vx = blur(x * x, g) - mx * mx;
  const Plane vy = blur(y * y, g) - my * my;
  const Plane cov = blur(x * y, g) - mx * my;
  const Plane cs = (2 * cov + kSsimC2) / (vx + vy + kSsimC2);
  const Plane lum = (2 * mx * my + kSsimC1) / (mx * mx + my * my + kSsimC1);
  return {cs.mean(), (lum * cs).mean()};
}

}  // namespace

double ms_ssim(const TensorD& a, const TensorD& b) {
  detail::require_same_shape(a.shape(), b.shape(), "ms_ssim");
  const Shape& s = a.shape();
  const int scales = ms_ssim_scales(s.height(), s.width());
  if (scales == 0) throw ShapeError("ms_ssim: image " + s.str() + " is smaller than the 11x11 window");
  const double weight_total = std::accumulate(kMsSsimWeights.begin(), kMsSsimWeights.begin() + scales, 0.0);
  const auto g = ssim_gaussian();

  double total = 0;
  for (Index n = 0; n < s.batch(); ++n) {
    for (Index c = 0; c < s.channels(); ++c) {
      Plane x = Eigen::Map<const Plane>(a.plane_data(n, c), s.height(), s.width());
      Plane y = Eigen::Map<const Plane>(b.plane_data(n, c), s.height(), s.width());
      double value = 1;
      for (int level = 0; level < scales; ++level) {
        if (level > 0) {
          x = downsample(x);
          y = downsample(y);
        }
        const auto [cs, ssim] = ssim_terms(x, y, g);
        const double term = std::max(level == scales - 1 ? ssim : cs, 0.0);
        value *= std::pow(term, kMsSsimWeights[level] / weight_total);
      }
      total += value;
    }
  }
  return total / static_cast<double>(s.batch() * s.channels());
}

double bits_per_pixel(std::size_t bytes, Index width, Index height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("bits_per_pixel: non-positive image size");
  return 8.0 * static_cast<double>(bytes) / static_cast<double>(width * height);
}

namespace {

struct Curve {
  std::vector<double> q, r;  // PSNR ascending, log10 rate
};

Curve prepare(const std::vector<RdPoint>& points, const char* which) {
  if (points.size() < 4) {
    throw std::invalid_argument(std::string("bd_rate: ") + which + " curve needs at least 4 points, got " +
                                std::to_string(points.size()));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].bpp > 0)) throw std::invalid_argument(std::string("bd_rate: ") + which + " rate must be positive");
    if (i > 0 && !(points[i].bpp > points[i - 1].bpp)) {
      throw std::invalid_argument(std::string("bd_rate: ") + which + " rates must be strictly increasing");
    }
  }
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return points[i].psnr_db < points[j].psnr_db; });
  Curve c;
  for (auto i : order) {
    if (!c.q.empty() && points[i].psnr_db <= c.q.back()) {
      throw std::invalid_argument(std::string("bd_rate: ") + which + " curve has repeated PSNR values");
    }
    c.q.push_back(points[i].psnr_db);
    c.r.push_back(std::log10(points[i].bpp));
  }
  return c;
}

// Least-squares cubic, coefficients lowest order first.
Eigen::Vector4d fit_cubic(const Curve& c) {
  const auto n = static_cast<Index>(c.q.size());
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Index i = 0; i < n; ++i) {
    const double q = c.q[static_cast<std::size_t>(i)];
    a.row(i) << 1, q, q * q, q * q * q;
    b(i) = c.r[static_cast<std::size_t>(i)];
  }
  return a.colPivHouseholderQr().solve(b);
}

double cubic_integral(const Eigen::Vector4d& p, double lo, double hi) {
  auto prim = [&](double x) { return p(0) * x + p(1) * x * x / 2 + p(2) * x * x * x / 3 + p(3) * x * x * x * x / 4; };
  return prim(hi) - prim(lo);
}

// Monotone on [lo, hi] when the derivative keeps one sign there.
bool cubic_monotone(const Eigen::Vector4d& p, double lo, double hi) {
  auto deriv = [&](double x) { return p(1) + 2 * p(2) * x + 3 * p(3) * x * x; };
  double lo_sign = deriv(lo), hi_sign = deriv(hi);
  if (lo_sign * hi_sign < 0) return false;
  if (p(3) != 0) {
    const double vertex = -p(2) / (3 * p(3));
    if (vertex > lo && vertex < hi && deriv(vertex) * lo_sign < 0) return false;
  }
  return true;
}

// Fritsch-Carlson slopes of the monotone piecewise cubic Hermite interpolant.
std::vector<double> pchip_slopes(const Curve& c) {
  const std::size_t n = c.q.size();
  std::vector<double> h(n - 1), delta(n - 1), d(n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = c.q[k + 1] - c.q[k];
    delta[k] = (c.r[k + 1] - c.r[k]) / h[k];
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0) {
      d[k] = 0;
    } else {
      const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
      d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0) return 0.0;
    if (d0 * d1 < 0 && std::abs(s) > std::abs(3 * d0)) return 3 * d0;
    return s;
  };
  if (n == 2) {
    d[0] = d[1] = delta[0];
  } else {
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }
  return d;
}

double pchip_integral(const Curve& c, double lo, double hi) {
  const auto d = pchip_slopes(c);
  // Two-point Gauss-Legendre is exact for each cubic piece.
  const double node = 1.0 / std::sqrt(3.0);
  double total = 0;
  for (std::size_t k = 0; k + 1 < c.q.size(); ++k) {
    const double a = std::max(lo, c.q[k]), b = std::min(hi, c.q[k + 1]);
    if (b <= a) continue;
    const double h = c.q[k + 1] - c.q[k];
    auto eval = [&](double x) {
      const double t = (x - c.q[k]) / h, t2 = t * t, t3 = t2 * t;
      return (2 * t3 - 3 * t2 + 1) * c.r[k] + (t3 - 2 * t2 + t) * h * d[k] + (-2 * t3 + 3 * t2) * c.r[k + 1] +
             (t3 - t2) * h * d[k + 1];
    };
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    total += half * (eval(mid - half * node) + eval(mid + half * node));
  }
  return total;
}

}  // namespace

double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test) {
  const Curve ca = prepare(anchor, "anchor"), ct = prepare(test, "test");
  const double lo = std::max(ca.q.front(), ct.q.front());
  const double hi = std::min(ca.q.back(), ct.q.back());
  if (!(hi > lo)) throw std::invalid_argument("bd_rate: curves share no PSNR interval");

  const auto pa = fit_cubic(ca), pt = fit_cubic(ct);
  double ia, it;
  if (cubic_monotone(pa, lo, hi) && cubic_monotone(pt, lo, hi)) {
    ia = cubic_integral(pa, lo, hi);
    it = cubic_integral(pt, lo, hi);
  } else {
    ia = pchip_integral(ca, lo, hi);
    it = pchip_integral(ct, lo, hi);
  }
  const double avg = (it - ia) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

}  // namespace asymcodec
