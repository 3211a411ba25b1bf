// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/params.hpp"

#include <cmath>
#include <random>

#include "gmbinet/errors.hpp"

namespace gmbinet {

template <typename T>
ParameterSet<T> ParameterSet<T>::initialize(const LayerGraph& graph, uint64_t seed) {
  ParameterSet<T> set;
  std::mt19937_64 rng(seed);
  for (const ParamSpec& spec : graph.params()) {
    std::vector<T> values(static_cast<std::size_t>(spec.shape.numel()));
    switch (spec.init) {
      case ParamInit::zeros:
        break;
      case ParamInit::ones:
        std::fill(values.begin(), values.end(), T(1));
        break;
      case ParamInit::kaiming_uniform: {
        const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in));
        for (auto& v : values) {
          // 53 random bits -> [0, 1); std distributions are not portable across libraries
          const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
          v = static_cast<T>((2.0 * u - 1.0) * bound);
        }
        break;
      }
    }
    set.push(spec.name, BasicTensor<T>(spec.shape, std::move(values), spec.trainable), spec.trainable);
  }
  return set;
}

template <typename T>
void ParameterSet<T>::push(std::string name, BasicTensor<T> tensor, bool trainable) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(tensor));
  trainable_.push_back(trainable);
}

template <typename T>
BasicTensor<T>& ParameterSet<T>::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return tensors_[it->second];
}

template <typename T>
const BasicTensor<T>& ParameterSet<T>::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return tensors_[it->second];
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

template <typename T>
int64_t ParameterSet<T>::trainable_count() const {
  int64_t total = 0;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (trainable_[i]) total += tensors_[i].numel();
  }
  return total;
}

template <typename T>
template <typename U>
ParameterSet<U> ParameterSet<T>::cast() const {
  ParameterSet<U> out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    BasicTensor<U> t = tensors_[i].template cast<U>();
    t.set_requires_grad(trainable_[i]);
    out.push(names_[i], std::move(t), trainable_[i]);
  }
  return out;
}

template <typename T>
ParameterSet<T> ParameterSet<T>::clone() const {
  return cast<T>();
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template ParameterSet<double> ParameterSet<float>::cast<double>() const;
template ParameterSet<float> ParameterSet<double>::cast<float>() const;

}  // namespace gmbinet
