// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gmbinet {

/// Extent of a rank-4 NCHW tensor.
struct Shape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t numel() const { return n * c * h * w; }
  int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

Shape scalar_shape();

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

/// Dense NCHW tensor with a shared value buffer and an optional gradient slot.
///
/// Copies are shallow: two copies refer to the same storage. Values are not
/// modified by the ops after creation; only the gradient slot is written
/// during a backward pass.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  int64_t numel() const { return shape().numel(); }

  std::span<const T> data() const;
  /// Writable view used by initializers, loaders and optimizers.
  std::span<T> mutable_data() const;
  T at(int64_t n, int64_t c, int64_t h, int64_t w) const;
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag) const;

  bool has_grad() const;
  std::span<const T> grad() const;
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<T> mutable_grad() const;
  void zero_grad() const;

  /// Deep copy of values; the copy has no gradient and is not tracked.
  BasicTensor clone() const;
  template <typename U>
  BasicTensor<U> cast() const;

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorStorage<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Ordered record of the backward closures of executed operations.
///
/// Append-only during a forward pass. backward() seeds d(loss)/d(loss) = 1
/// and replays the records in reverse order, accumulating gradients into every
/// participating tensor that requires them.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn);
  void backward(const BasicTensor<T>& loss);
  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<std::function<void()>> records_;
};

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace gmbinet
