#ifndef ASYMCODEC_IMAGE_HPP
#define ASYMCODEC_IMAGE_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "asymcodec/io.hpp"
#include "asymcodec/ops.hpp"

namespace asymcodec {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB, interleaved, row-major.
struct Image {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(Index w, Index h) : width(w), height(h), rgb(static_cast<std::size_t>(w * h * 3), 0) {}

  std::uint8_t& at(Index y, Index x, int c) { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  std::uint8_t at(Index y, Index x, int c) const { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  bool operator==(const Image&) const = default;
};

/// Binary PPM (P6, maxval 255). Throws ImageError on malformed input.
Image parse_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image& image);
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Smallest multiple of `multiple` that is >= n.
inline Index padded_size(Index n, Index multiple) { return (n + multiple - 1) / multiple * multiple; }

/// (1, 3, H, W) with samples on the [0, 255] scale.
template <typename Scalar>
Tensor<Scalar> image_to_tensor(const Image& image) {
  Tensor<Scalar> t(Shape(1, 3, image.height, image.width));
  for (int c = 0; c < 3; ++c) {
    Scalar* p = t.plane_data(0, c);
    for (Index i = 0; i < image.width * image.height; ++i) p[i] = static_cast<Scalar>(image.rgb[static_cast<std::size_t>(i * 3 + c)]);
  }
  return t;
}

/// Samples scaled from [0, 255] to [-1, 1].
template <typename Scalar>
Tensor<Scalar> image_to_unit(const Image& image) {
  Tensor<Scalar> t = image_to_tensor<Scalar>(image);
  t.array() = t.array() / Scalar(127.5) - Scalar(1);
  return t;
}

/// Inverse of image_to_unit: round((v + 1) * 127.5), clamped to [0, 255].
template <typename Scalar>
Image unit_to_image(const Tensor<Scalar>& t) {
  const Shape& s = t.shape();
  if (s.batch() != 1 || s.channels() != 3) throw ShapeError("unit_to_image: expected (1, 3, H, W), got " + s.str());
  Image img(s.width(), s.height());
  for (int c = 0; c < 3; ++c) {
    const Scalar* p = t.plane_data(0, c);
    for (Index i = 0; i < s.plane(); ++i) {
      const double v = std::round((static_cast<double>(p[i]) + 1.0) * 127.5);
      img.rgb[static_cast<std::size_t>(i * 3 + c)] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return img;
}

/// Extends bottom and right edges by reflection (edge pixel not repeated)
/// up to the next multiple of `multiple`.
template <typename Scalar>
Tensor<Scalar> pad_reflect(const Tensor<Scalar>& t, Index multiple) {
  const Shape& s = t.shape();
  const Index h = padded_size(s.height(), multiple), w = padded_size(s.width(), multiple);
  Tensor<Scalar> out(Shape(s.batch(), s.channels(), h, w));
  for (Index n = 0; n < s.batch(); ++n) {
    for (Index c = 0; c < s.channels(); ++c) {
      for (Index y = 0; y < h; ++y) {
        const Index sy = detail::reflect_index(y, s.height());
        for (Index x = 0; x < w; ++x) out(n, c, y, x) = t(n, c, sy, detail::reflect_index(x, s.width()));
      }
    }
  }
  return out;
}

/// Top-left (height, width) window.
template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& t, Index height, Index width) {
  const Shape& s = t.shape();
  if (height > s.height() || width > s.width()) {
    throw ShapeError("crop: " + std::to_string(height) + "x" + std::to_string(width) + " exceeds " + s.str());
  }
  Tensor<Scalar> out(Shape(s.batch(), s.channels(), height, width));
  for (Index n = 0; n < s.batch(); ++n) {
    for (Index c = 0; c < s.channels(); ++c) {
      out.plane(n, c) = t.plane(n, c).topLeftCorner(height, width);
    }
  }
  return out;
}

}  // namespace asymcodec

#endif  // ASYMCODEC_IMAGE_HPP
