#ifndef ASYMCODEC_TENSOR_HPP
#define ASYMCODEC_TENSOR_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace asymcodec {

using Index = Eigen::Index;

/// Thrown for any violated shape or argument precondition.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// (batch, channels, height, width).
struct Shape {
  std::array<Index, 4> dims{0, 0, 0, 0};

  constexpr Shape() = default;
  constexpr Shape(Index n, Index c, Index h, Index w) : dims{n, c, h, w} {}

  constexpr Index batch() const { return dims[0]; }
  constexpr Index channels() const { return dims[1]; }
  constexpr Index height() const { return dims[2]; }
  constexpr Index width() const { return dims[3]; }
  constexpr Index plane() const { return dims[2] * dims[3]; }
  constexpr Index size() const { return dims[0] * dims[1] * dims[2] * dims[3]; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(dims[0]) + "," + std::to_string(dims[1]) + "," +
           std::to_string(dims[2]) + "," + std::to_string(dims[3]) + ")";
  }
};

/// Dense NCHW array. Storage is a contiguous Eigen column vector in row-major
/// NCHW order, so a single (n, c) plane is a contiguous h*w block.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  /// channels x (h*w) view of one batch item.
  using ItemMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstItemMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.size())) { check_dims(); }
  Tensor(const Shape& shape, Scalar fill) : shape_(shape), data_(Array::Constant(shape.size(), fill)) {
    check_dims();
  }
  Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor scalar(Scalar v) { return Tensor(Shape(1, 1, 1, 1), v); }

  const Shape& shape() const { return shape_; }
  Index batch() const { return shape_.batch(); }
  Index channels() const { return shape_.channels(); }
  Index height() const { return shape_.height(); }
  Index width() const { return shape_.width(); }
  Index size() const { return shape_.size(); }
  bool empty() const { return shape_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_.channels() + c) * shape_.height() + h) * shape_.width() + w;
  }
  Scalar& operator()(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  Scalar operator()(Index n, Index c, Index h, Index w) const { return data_[offset(n, c, h, w)]; }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar* plane_data(Index n, Index c) { return data_.data() + offset(n, c, 0, 0); }
  const Scalar* plane_data(Index n, Index c) const { return data_.data() + offset(n, c, 0, 0); }

  PlaneMap plane(Index n, Index c) { return PlaneMap(plane_data(n, c), height(), width()); }
  ConstPlaneMap plane(Index n, Index c) const { return ConstPlaneMap(plane_data(n, c), height(), width()); }

  ItemMap item(Index n) { return ItemMap(plane_data(n, 0), channels(), shape_.plane()); }
  ConstItemMap item(Index n) const { return ConstItemMap(plane_data(n, 0), channels(), shape_.plane()); }

  Scalar item_scalar() const {
    if (size() != 1) throw ShapeError("item_scalar on tensor of shape " + shape_.str());
    return data_[0];
  }

  bool all_finite() const { return data_.isFinite().all(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  void check_dims() const {
    for (Index d : shape_.dims) {
      if (d < 0) throw ShapeError("negative dimension in shape " + shape_.str());
    }
  }

  Shape shape_;
  Array data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace asymcodec

#endif  // ASYMCODEC_TENSOR_HPP
