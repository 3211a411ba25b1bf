// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gmbinet/tensor.hpp"

namespace gmbinet {

/// Geometry of a square-kernel 2-D convolution.
struct ConvSpec {
  int64_t in_channels = 1;
  int64_t out_channels = 1;
  int64_t kernel = 3;
  int64_t stride = 1;
  int64_t dilation = 1;
  int64_t padding = 0;
  int64_t groups = 1;
  bool bias = false;

  /// Throws ConfigError when the fields break the divisibility rules.
  void validate() const;
  bool depthwise() const { return groups == in_channels && groups == out_channels; }
  bool pointwise() const { return kernel == 1 && dilation == 1; }
  int64_t in_per_group() const { return in_channels / groups; }
  int64_t out_per_group() const { return out_channels / groups; }
  /// Output extent along one axis, or a value <= 0 when the kernel does not fit.
  int64_t output_extent(int64_t input_extent) const;
  Shape weight_shape() const { return {out_channels, in_per_group(), kernel, kernel}; }
  bool operator==(const ConvSpec&) const = default;
  std::string str() const;

  static ConvSpec depthwise_3x3(int64_t channels, int64_t dilation, int64_t stride = 1);
  static ConvSpec pointwise_1x1(int64_t in, int64_t out, bool bias = false);
};

enum class ConvAlgo {
  direct,   ///< row-wise direct summation; used for training
  lowered,  ///< im2col + matrix product; forward only
};

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      const ConvSpec& spec, Tape<T>* tape = nullptr, ConvAlgo algo = ConvAlgo::direct);

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization over (n, h, w). In training mode the batch
/// statistics are used and the running estimates are updated in place.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                          const BatchNormOptions& options, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x, Tape<T>* tape = nullptr);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, Tape<T>* tape = nullptr);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b, Tape<T>* tape = nullptr);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor, Tape<T>* tape = nullptr);

/// Corner-aligned bilinear resize to an arbitrary (h, w).
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int64_t out_h, int64_t out_w, Tape<T>* tape = nullptr);
/// Corner-aligned bilinear upsampling by an integer factor.
template <typename T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& x, int64_t factor, Tape<T>* tape = nullptr);

template <typename T>
std::vector<BasicTensor<T>> channel_split(const BasicTensor<T>& x, int64_t parts, Tape<T>* tape = nullptr);
template <typename T>
BasicTensor<T> channel_slice(const BasicTensor<T>& x, int64_t begin, int64_t count, Tape<T>* tape = nullptr);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, Tape<T>* tape = nullptr);
/// Interleaves channels: viewing c as (groups, c/groups), transposes to (c/groups, groups).
template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& x, int64_t groups, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x, Tape<T>* tape = nullptr);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, Tape<T>* tape = nullptr);

/// True when the tape should record an op with these inputs.
template <typename T>
bool should_record(const Tape<T>* tape, std::initializer_list<const BasicTensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const auto* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace gmbinet

namespace gmbinet {

/// Per-sample z-score: (x - mean) / (std + eps) over all channels and pixels
/// of each batch element. Not tracked by the tape.
template <typename T>
BasicTensor<T> standardize(const BasicTensor<T>& x, double eps = 1e-6);

}  // namespace gmbinet
