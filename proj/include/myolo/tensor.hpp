// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "myolo/error.hpp"

namespace myolo {

using Index = Eigen::Index;
using Shape = std::vector<int>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index acc, int d) { return acc * d; });
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense n-d array stored row-major in an Eigen vector. Feature maps use the
/// fixed channels-height-width ordering, so a [C,H,W] tensor views directly
/// as a C x (H*W) row-major matrix.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Vector::Constant(checked_size(shape_), fill)) {}

  BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw Error("tensor: shape " + to_string(shape_) + " holds " +
                  std::to_string(shape_size(shape_)) + " values, got " +
                  std::to_string(data_.size()));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Vector(Eigen::Map<const Vector>(
                                          values.begin(), static_cast<Index>(values.size())))) {}

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), Scalar(0)); }
  static BasicTensor ones(Shape shape) { return BasicTensor(std::move(shape), Scalar(1)); }

  template <typename Rng>
  static BasicTensor uniform(Shape shape, Rng& rng, Scalar lo, Scalar hi) {
    BasicTensor t(std::move(shape));
    std::uniform_real_distribution<Scalar> dist(lo, hi);
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = dist(rng);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  Vector& values() { return data_; }
  const Vector& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(int c, int h, int w) { return data_[offset(c, h, w)]; }
  Scalar operator()(int c, int h, int w) const { return data_[offset(c, h, w)]; }

  /// [C,H,W] viewed as C x (H*W).
  MatrixMap channel_matrix() { return MatrixMap(data(), dim(0), size() / dim(0)); }
  ConstMatrixMap channel_matrix() const { return ConstMatrixMap(data(), dim(0), size() / dim(0)); }

  bool all_finite() const { return data_.allFinite(); }

  bool operator==(const BasicTensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  static Index checked_size(const Shape& shape) {
    for (int d : shape) {
      if (d <= 0) throw Error("tensor: non-positive extent in shape " + to_string(shape));
    }
    return shape_size(shape);
  }

  Index offset(int c, int h, int w) const {
    return (static_cast<Index>(c) * shape_[1] + h) * shape_[2] + w;
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

}  // namespace myolo
