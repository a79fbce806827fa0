#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psrnn/error.hpp"

namespace psrnn {

/// Extents of a dense array of rank 1 to 4. Every extent is at least 1.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;

  Shape(std::initializer_list<std::size_t> extents) { assign(extents.begin(), extents.end()); }

  explicit Shape(std::span<const std::size_t> extents) { assign(extents.begin(), extents.end()); }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }

  std::size_t elements() const noexcept {
    std::size_t n = rank_ == 0 ? 0 : 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  std::span<const std::size_t> extents() const noexcept { return {dims_.data(), rank_}; }

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    return a.rank_ == b.rank_ && std::equal(a.dims_.begin(), a.dims_.begin() + a.rank_, b.dims_.begin());
  }

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
    os << ')';
    return os.str();
  }

 private:
  template <class It>
  void assign(It first, It last) {
    const auto n = static_cast<std::size_t>(std::distance(first, last));
    if (n == 0 || n > kMaxRank) throw ShapeError("invalid shape: rank must be 1..4, got " + std::to_string(n));
    rank_ = n;
    std::size_t i = 0;
    for (It it = first; it != last; ++it, ++i) {
      if (*it < 1) throw ShapeError("invalid shape: extents must be >= 1");
      dims_[i] = *it;
    }
  }

  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

/// Dense row-major array. Storage precision is `T`; reductions and products
/// accumulate in double.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.elements(), fill) {}

  BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.elements())
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  T& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  /// Same data viewed under a new shape with equal element count.
  BasicTensor reshaped(Shape shape) const {
    if (shape.elements() != data_.size())
      throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    return BasicTensor(shape, data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

template <class T>
BasicTensor<T> create(Shape shape, T fill_value) {
  return BasicTensor<T>(shape, fill_value);
}

inline Tensor create(Shape shape, double fill_value) { return Tensor(shape, static_cast<float>(fill_value)); }

namespace detail {

using DMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DVec = Eigen::VectorXd;

template <class T>
DMat to_dmat(const T* p, std::size_t rows, std::size_t cols) {
  using Src = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const Src>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols))
      .template cast<double>();
}

/// View of a tensor as a rows x cols matrix, where rows is the product of all
/// extents except the last.
template <class T>
DMat to_dmat(const BasicTensor<T>& t) {
  const std::size_t cols = t.dim(t.rank() - 1);
  return to_dmat(t.data(), t.size() / cols, cols);
}

template <class T>
BasicTensor<T> from_dmat(const DMat& m, Shape shape) {
  if (static_cast<std::size_t>(m.size()) != shape.elements()) throw ShapeError("matrix/shape size mismatch");
  std::vector<T> out(shape.elements());
  const double* src = m.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src[i]);
  return BasicTensor<T>(shape, std::move(out));
}

template <class T>
BasicTensor<T> from_dmat(const DMat& m) {
  return from_dmat<T>(m, Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

template <class T, class F>
BasicTensor<T> map(const BasicTensor<T>& a, F f) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<T>(f(static_cast<double>(a[i])));
  return out;
}

template <class T, class F>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op, F f) {
  require_same_shape(a, b, op);
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = static_cast<T>(f(static_cast<double>(a[i]), static_cast<double>(b[i])));
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// Matrix product of two rank-2 tensors, accumulated in double.
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be rank 2");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimension mismatch " + a.shape().str() + " x " + b.shape().str());
  const detail::DMat p = detail::to_dmat(a) * detail::to_dmat(b);
  return detail::from_dmat<T>(p);
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, "add", [](double x, double y) { return x + y; });
}
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, "sub", [](double x, double y) { return x - y; });
}
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, "mul", [](double x, double y) { return x * y; });
}
template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, double s) {
  return detail::map(a, [s](double x) { return s * x; });
}
template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a) {
  return detail::map(a, [](double x) { return detail::sigmoid(x); });
}
template <class T>
BasicTensor<T> tanh(const BasicTensor<T>& a) {
  return detail::map(a, [](double x) { return std::tanh(x); });
}
template <class T>
BasicTensor<T> clip01(const BasicTensor<T>& a) {
  return detail::map(a, [](double x) { return std::clamp(x, 0.0, 1.0); });
}

enum class PlaneAxis { Horizontal, Vertical };

/// Splits a (n, n, c) tensor into its n row planes (horizontal) or column
/// planes (vertical), each of shape (n, c).
template <class T>
std::vector<BasicTensor<T>> split_planes(const BasicTensor<T>& t, PlaneAxis axis) {
  if (t.rank() != 3 || t.dim(0) != t.dim(1))
    throw ShapeError("split_planes: expected square (n,n,c) tensor, got " + t.shape().str());
  const std::size_t n = t.dim(0), c = t.dim(2);
  std::vector<BasicTensor<T>> planes;
  planes.reserve(n);
  for (std::size_t p = 0; p < n; ++p) {
    BasicTensor<T> plane(Shape{n, c});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k)
        plane.at(i, k) = axis == PlaneAxis::Horizontal ? t.at(p, i, k) : t.at(i, p, k);
    planes.push_back(std::move(plane));
  }
  return planes;
}

/// Inverse of split_planes.
template <class T>
BasicTensor<T> concat_planes(std::span<const BasicTensor<T>> planes, PlaneAxis axis) {
  if (planes.empty()) throw ShapeError("concat_planes: no planes");
  const std::size_t n = planes.size();
  if (planes.front().rank() != 2) throw ShapeError("concat_planes: planes must be rank 2");
  const std::size_t c = planes.front().dim(1);
  BasicTensor<T> out(Shape{n, n, c});
  for (std::size_t p = 0; p < n; ++p) {
    const auto& plane = planes[p];
    if (plane.rank() != 2 || plane.dim(0) != n || plane.dim(1) != c)
      throw ShapeError("concat_planes: plane " + std::to_string(p) + " has shape " + plane.shape().str());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        if (axis == PlaneAxis::Horizontal)
          out.at(p, i, k) = plane.at(i, k);
        else
          out.at(i, p, k) = plane.at(i, k);
      }
  }
  return out;
}

template <class T>
BasicTensor<T> concat_planes(const std::vector<BasicTensor<T>>& planes, PlaneAxis axis) {
  return concat_planes(std::span<const BasicTensor<T>>(planes), axis);
}

/// Sum of squares of all entries, in double.
template <class T>
double squared_norm(const BasicTensor<T>& t) {
  double s = 0.0;
  for (T v : t.values()) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

template <class T>
bool all_finite(const BasicTensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
}

}  // namespace psrnn
