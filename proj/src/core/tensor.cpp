// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/tensor.hpp"

#include <algorithm>

#include "gmbinet/errors.hpp"

namespace gmbinet {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Shape scalar_shape() { return Shape{1, 1, 1, 1}; }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor extent " + shape.str());
  }
  if (static_cast<int64_t>(values.size()) != shape.numel()) {
    throw ShapeError("tensor of shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(values.size()));
  }
  impl_ = std::make_shared<TensorStorage<T>>();
  impl_->shape = shape;
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  return BasicTensor(shape, std::vector<T>(static_cast<std::size_t>(std::max<int64_t>(shape.numel(), 0)), value),
                     requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return full(scalar_shape(), value, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  static const Shape empty{};
  return impl_ ? impl_->shape : empty;
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  if (!impl_) return {};
  return impl_->data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() const {
  if (!impl_) return {};
  return impl_->data;
}

template <typename T>
T BasicTensor<T>::at(int64_t n, int64_t c, int64_t h, int64_t w) const {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 || w >= s.w) {
    throw ShapeError("index out of range for tensor " + s.str());
  }
  return impl_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (!impl_ || impl_->shape.numel() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + shape().str());
  }
  return impl_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool flag) const {
  if (!impl_) throw ShapeError("set_requires_grad on an undefined tensor");
  impl_->requires_grad = flag;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() const {
  if (!impl_) throw ShapeError("gradient access on an undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() const {
  if (impl_) impl_->grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  if (!impl_) return {};
  return BasicTensor(impl_->shape, impl_->data, false);
}

template <typename T>
template <typename U>
BasicTensor<U> BasicTensor<T>::cast() const {
  if (!impl_) return {};
  std::vector<U> values(impl_->data.begin(), impl_->data.end());
  return BasicTensor<U>(impl_->shape, std::move(values), impl_->requires_grad);
}

template <typename T>
void Tape<T>::record(std::function<void()> backward_fn) {
  records_.push_back(std::move(backward_fn));
}

template <typename T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.shape() != scalar_shape()) {
    throw ShapeError("backward needs a scalar loss of shape (1,1,1,1), got " + loss.shape().str());
  }
  BasicTensor<T> seed = loss;
  seed.mutable_grad()[0] += T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template BasicTensor<double> BasicTensor<float>::cast<double>() const;
template BasicTensor<float> BasicTensor<double>::cast<float>() const;
template BasicTensor<float> BasicTensor<float>::cast<float>() const;
template BasicTensor<double> BasicTensor<double>::cast<double>() const;
template class Tape<float>;
template class Tape<double>;

}  // namespace gmbinet
