// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "gmbinet/network.hpp"
#include "gmbinet/tensor.hpp"

namespace gmbinet {

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross entropy; pred is clamped to [eps, 1 - eps].
template <typename T>
BasicTensor<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, Tape<T>* tape = nullptr);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Mean SSIM over all valid (unpadded) windows of every (sample, channel) plane.
template <typename T>
double ssim_index(const BasicTensor<T>& a, const BasicTensor<T>& b, const SsimOptions& options = {});

/// 1 - mean SSIM. Differentiable with respect to both arguments.
template <typename T>
BasicTensor<T> ssim_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, Tape<T>* tape = nullptr,
                         const SsimOptions& options = {});

/// BCE + SSIM for one map.
template <typename T>
BasicTensor<T> hybrid_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, Tape<T>* tape = nullptr);

/// Per-stage coefficients; alpha[i] weights the loss of side output i + 1.
struct LossWeights {
  std::vector<double> alpha = std::vector<double>(5, 1.0);
  void validate() const;
};

enum class SideResolution {
  upsample_maps,     ///< side maps resized to the label resolution (default)
  downsample_labels, ///< labels resized to each side map's resolution
};

template <typename T>
struct LossBreakdown {
  BasicTensor<T> total;
  std::vector<double> per_stage;  // unweighted BCE + SSIM of each side output
};

/// Sum over stages of alpha_i * (BCE_i + SSIM_i).
template <typename T>
LossBreakdown<T> total_loss(const DeepSupervisionOutputs<T>& outputs, const BasicTensor<T>& target,
                            const LossWeights& weights, Tape<T>* tape = nullptr,
                            SideResolution resolution = SideResolution::upsample_maps);

}  // namespace gmbinet
