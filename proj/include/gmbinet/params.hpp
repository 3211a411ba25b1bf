// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gmbinet/graph.hpp"
#include "gmbinet/tensor.hpp"

namespace gmbinet {

/// Named parameter tensors of a LayerGraph, in graph declaration order.
///
/// Trainable entries carry requires_grad; batch-norm running statistics are
/// stored here too but are never trained.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;

  /// Kaiming-uniform conv weights (bound sqrt(6 / fan_in)), zero biases, unit
  /// BN scales. The generator is consumed in declaration order, so a seed
  /// fixes every value.
  static ParameterSet initialize(const LayerGraph& graph, uint64_t seed);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  bool trainable(std::size_t i) const { return trainable_.at(i); }
  BasicTensor<T>& at(std::size_t i) { return tensors_.at(i); }
  const BasicTensor<T>& at(std::size_t i) const { return tensors_.at(i); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  BasicTensor<T>& get(const std::string& name);
  const BasicTensor<T>& get(const std::string& name) const;

  void zero_grad();
  int64_t trainable_count() const;

  template <typename U>
  ParameterSet<U> cast() const;
  /// Deep copy: no storage is shared with this set.
  ParameterSet clone() const;

  void push(std::string name, BasicTensor<T> tensor, bool trainable);

 private:
  std::vector<std::string> names_;
  std::vector<BasicTensor<T>> tensors_;
  std::vector<bool> trainable_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace gmbinet
