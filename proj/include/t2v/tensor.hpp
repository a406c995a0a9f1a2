#pragma once

#include "t2v/errors.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <string>

namespace t2v {

/// Extent of a (batch, channel, height, width) tensor; unused trailing axes are 1.
struct Shape
{
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  Eigen::Index size() const { return Eigen::Index(n) * c * h * w; }
  Eigen::Index pixels() const { return Eigen::Index(h) * w; }
  bool operator==(Shape const &) const = default;
  std::string str() const
  {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
  }
};

/// Dense NCHW tensor over contiguous storage.
template <typename Scalar> class Tensor
{
public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape)
    : shape_(shape)
    , data_(Array::Zero(shape.size()))
  {
  }
  Tensor(Shape shape, Array data)
    : shape_(shape)
    , data_(std::move(data))
  {
    if (data_.size() != shape_.size()) { throw ShapeError("tensor data length does not match shape " + shape_.str()); }
  }

  static Tensor constant(Shape shape, Scalar value) { return Tensor(shape, Array::Constant(shape.size(), value)); }

  Shape const &shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }
  Array &data() { return data_; }
  Array const &data() const { return data_; }
  Scalar *ptr() { return data_.data(); }
  Scalar const *ptr() const { return data_.data(); }

  Scalar &operator()(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  Scalar operator()(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }
  Scalar &operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  /// Contiguous block holding sample `n`.
  auto sample_block(int n) { return data_.segment(Eigen::Index(n) * per_sample(), per_sample()); }
  auto sample_block(int n) const { return data_.segment(Eigen::Index(n) * per_sample(), per_sample()); }
  Eigen::Index per_sample() const { return Eigen::Index(shape_.c) * shape_.h * shape_.w; }

  /// Copy of a single sample as a batch-1 tensor.
  Tensor sample(int n) const
  {
    return Tensor(Shape{1, shape_.c, shape_.h, shape_.w}, Array(sample_block(n)));
  }

  Tensor reshaped(Shape shape) const { return Tensor(shape, data_); }

  template <typename Other> Tensor<Other> cast() const { return Tensor<Other>(shape_, data_.template cast<Other>()); }

private:
  Eigen::Index offset(int n, int c, int h, int w) const
  {
    return ((Eigen::Index(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_{0, 0, 0, 0};
  Array data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename Scalar> void require_same_shape(Tensor<Scalar> const &a, Tensor<Scalar> const &b, char const *what)
{
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

/// Stacks batch-1 (or any batch) tensors of equal per-sample shape along the batch axis.
template <typename Scalar, typename Range> Tensor<Scalar> stack_batch(Range const &parts)
{
  Shape shape{0, 0, 0, 0};
  for (Tensor<Scalar> const &p : parts) {
    if (shape.n == 0) {
      shape = p.shape();
    } else {
      if (p.shape().c != shape.c || p.shape().h != shape.h || p.shape().w != shape.w) {
        throw ShapeError("stack_batch: per-sample shape mismatch");
      }
      shape.n += p.shape().n;
    }
  }
  Tensor<Scalar> out(shape);
  Eigen::Index at = 0;
  for (Tensor<Scalar> const &p : parts) {
    out.data().segment(at, p.size()) = p.data();
    at += p.size();
  }
  return out;
}

} // namespace t2v
