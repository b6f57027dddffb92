#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "metainv/errors.hpp"

namespace metainv {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw std::invalid_argument("tensor shape has negative dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

/// Dense n-dimensional array of doubles, flat row-major storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(Eigen::ArrayXd::Zero(shape_size(shape_))) {}

  Tensor(Shape shape, Eigen::ArrayXd data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
      throw std::invalid_argument("tensor data length does not match shape " +
                                  shape_to_string(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, double value) {
    Index n = shape_size(shape);
    return Tensor(std::move(shape), Eigen::ArrayXd::Constant(n, value));
  }

  static Tensor from_list(Shape shape, std::initializer_list<double> values) {
    Eigen::ArrayXd d(static_cast<Index>(values.size()));
    Index i = 0;
    for (double v : values) d[i++] = v;
    return Tensor(std::move(shape), std::move(d));
  }

  /// Flat column vector view of an Eigen vector.
  static Tensor from_vector(const Eigen::VectorXd& v) {
    return Tensor({v.size()}, v.array());
  }

  /// Row-major copy of an Eigen matrix as a rank-2 tensor.
  static Tensor from_matrix(const Eigen::MatrixXd& m) {
    Tensor t({m.rows(), m.cols()});
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) t.data_[i * m.cols() + j] = m(i, j);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }

  Eigen::ArrayXd& flat() { return data_; }
  const Eigen::ArrayXd& flat() const { return data_; }

  double operator[](Index i) const { return data_[i]; }
  double& operator[](Index i) { return data_[i]; }

  double at2(Index i, Index j) const { return data_[i * shape_[1] + j]; }
  double& at2(Index i, Index j) { return data_[i * shape_[1] + j]; }
  double at3(Index c, Index i, Index j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double& at3(Index c, Index i, Index j) { return data_[(c * shape_[1] + i) * shape_[2] + j]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Eigen::Map<const Eigen::VectorXd> vec() const {
    return Eigen::Map<const Eigen::VectorXd>(data_.data(), data_.size());
  }

  /// Rank-2 view as a matrix (row-major storage).
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  mat() const {
    if (rank() != 2) throw std::invalid_argument("mat() requires a rank-2 tensor");
    return {data_.data(), shape_[0], shape_[1]};
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw std::invalid_argument("reshape size mismatch: " + shape_to_string(shape_) + " -> " +
                                  shape_to_string(shape));
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const { return data_.isFinite().all(); }

  void check_finite(const std::string& where) const {
    if (!all_finite()) throw NumericalError("non-finite values in " + where);
  }

  double norm() const { return std::sqrt(data_.square().sum()); }
  double dot(const Tensor& other) const { return (data_ * other.data_).sum(); }
  double max_abs() const { return data_.size() ? data_.abs().maxCoeff() : 0.0; }

  Tensor& operator+=(const Tensor& o) { data_ += o.data_; return *this; }
  Tensor& operator-=(const Tensor& o) { data_ -= o.data_; return *this; }
  Tensor& operator*=(double s) { data_ *= s; return *this; }

  friend Tensor operator+(Tensor a, const Tensor& b) { a += b; return a; }
  friend Tensor operator-(Tensor a, const Tensor& b) { a -= b; return a; }
  friend Tensor operator*(double s, Tensor a) { a *= s; return a; }

 private:
  Shape shape_;
  Eigen::ArrayXd data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const std::string& where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(where + ": shape mismatch " + shape_to_string(a.shape()) +
                                " vs " + shape_to_string(b.shape()));
}

}  // namespace metainv
