#pragma once

#include <Eigen/Core>
#include <Eigen/StdVector>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tactnet {

using Index = Eigen::Index;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Dense row-major N-d array (last index fastest).  Carrier for images,
// activations, parameters and gradients.  Scalar is float for training and
// inference, double for gradient checking.
template <typename Scalar>
class Tensor {
 public:
  using VecMap = Eigen::Map<ArrayX<Scalar>>;
  using ConstVecMap = Eigen::Map<const ArrayX<Scalar>>;
  using MatMap = Eigen::Map<RowMat<Scalar>>;
  using ConstMatMap = Eigen::Map<const RowMat<Scalar>>;

  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    for (Index d : shape_) require(d > 0, "Tensor: extents must be positive");
    data_.assign(static_cast<std::size_t>(count(shape_)), Scalar(0));
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  static Tensor constant(std::vector<Index> shape, Scalar value) {
    Tensor t(std::move(shape));
    t.array() = value;
    return t;
  }

  static Tensor from(std::vector<Index> shape, std::initializer_list<Scalar> values) {
    Tensor t(std::move(shape));
    require(static_cast<Index>(values.size()) == t.size(), "Tensor::from: value count mismatch");
    std::copy(values.begin(), values.end(), t.data_.begin());
    return t;
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_[static_cast<std::size_t>(i)]; }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  Scalar operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  Scalar& operator()(Index a) { return data_[static_cast<std::size_t>(a)]; }
  Scalar& operator()(Index a, Index b) { return (*this)[a * dim(1) + b]; }
  Scalar& operator()(Index a, Index b, Index c) { return (*this)[(a * dim(1) + b) * dim(2) + c]; }
  Scalar& operator()(Index a, Index b, Index c, Index d) {
    return (*this)[((a * dim(1) + b) * dim(2) + c) * dim(3) + d];
  }
  Scalar operator()(Index a) const { return data_[static_cast<std::size_t>(a)]; }
  Scalar operator()(Index a, Index b) const { return (*this)[a * dim(1) + b]; }
  Scalar operator()(Index a, Index b, Index c) const { return (*this)[(a * dim(1) + b) * dim(2) + c]; }
  Scalar operator()(Index a, Index b, Index c, Index d) const {
    return (*this)[((a * dim(1) + b) * dim(2) + c) * dim(3) + d];
  }

  VecMap array() { return VecMap(data_.data(), size()); }
  ConstVecMap array() const { return ConstVecMap(data_.data(), size()); }

  // 2-d view; rows*cols must cover the tensor exactly
  MatMap matrix(Index rows, Index cols) {
    require(rows * cols == size(), "Tensor::matrix: view does not cover tensor");
    return MatMap(data_.data(), rows, cols);
  }
  ConstMatMap matrix(Index rows, Index cols) const {
    require(rows * cols == size(), "Tensor::matrix: view does not cover tensor");
    return ConstMatMap(data_.data(), rows, cols);
  }

  void reshape(std::vector<Index> shape) {
    require(count(shape) == size(), "Tensor::reshape: element count mismatch");
    shape_ = std::move(shape);
  }

  Tensor reshaped(std::vector<Index> shape) const {
    Tensor t(*this);
    t.reshape(std::move(shape));
    return t;
  }

  bool all_finite() const { return array().isFinite().all(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t(shape_);
    t.array() = array().template cast<Other>();
    return t;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  static Index count(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<Index> shape_;
  // Eigen-aligned storage keeps vectorized reduction order independent of
  // which thread's allocator served the buffer (bit-reproducibility across
  // serial and parallel runs).
  std::vector<Scalar, Eigen::aligned_allocator<Scalar>> data_;
};

inline std::string shape_string(const std::vector<Index>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace tactnet
