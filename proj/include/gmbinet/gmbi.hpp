// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gmbinet/executor.hpp"
#include "gmbinet/graph.hpp"
#include "gmbinet/params.hpp"
#include "gmbinet/tensor.hpp"

namespace gmbinet {

/// Cross-scale interaction f(guide, x).
enum class Interaction {
  ewms,    ///< sigmoid(guide) * x + x, parameter-free
  sum,     ///< guide + x
  mul,     ///< guide * x
  concat,  ///< 1x1 conv over cat(guide, x); adds parameters per site
  none,    ///< x (no interaction)
};

enum class ScaleMode {
  group,   ///< split channels into n groups, group i uses dilation i
  branch,  ///< every scale sees all c channels; scale outputs are summed
  single,  ///< one dilation-1 depthwise path
};

/// What backward enhancement uses as the guide for scale i.
enum class EnhancementSource {
  enhanced,  ///< already-refined neighbour y_{i+1}^en
  raw,       ///< unrefined y_{i+1}
};

enum class EnhancementOrder {
  top_down,  ///< y_n^en = y_n; y_i^en = f(y_{i+1}^en, y_i) for i = n-1 .. 1
  literal,   ///< y_1^en = y_1; y_i^en = f(y_i, y_{i-1}) for i = 2 .. n
};

const char* to_string(Interaction v);
const char* to_string(ScaleMode v);
Interaction parse_interaction(const std::string& text);
ScaleMode parse_scale_mode(const std::string& text);

struct GMBIConfig {
  int64_t channels = 32;
  int64_t scale_dim = 4;
  int64_t kernel = 3;
  Interaction interaction = Interaction::ewms;
  bool forward_guidance = true;
  bool backward_enhancement = true;
  ScaleMode mode = ScaleMode::group;
  EnhancementSource enhancement_source = EnhancementSource::enhanced;
  EnhancementOrder enhancement_order = EnhancementOrder::top_down;

  /// Throws ConfigError (e.g. channels not divisible by scale_dim in group mode).
  void validate() const;
  /// Number of scale paths; 1 in single mode.
  int64_t scales() const { return mode == ScaleMode::single ? 1 : scale_dim; }
  /// Channels seen by each scale path.
  int64_t path_channels() const { return mode == ScaleMode::group ? channels / scale_dim : channels; }
  bool guidance_active() const { return interaction != Interaction::none && forward_guidance && scales() > 1; }
  bool enhancement_active() const {
    return interaction != Interaction::none && backward_enhancement && scales() > 1;
  }
  ConvSpec depthwise_spec(int64_t scale_index) const;  // 1-based
  std::string str() const;
};

template <typename T>
struct BatchNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
};

/// Weights of the 1x1 conv used at one concat interaction site.
template <typename T>
struct SiteWeights {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
struct GMBIWeights {
  std::vector<BasicTensor<T>> depthwise;  // scale i: (p, 1, k, k), dilation i
  std::vector<BatchNormParams<T>> depthwise_bn;
  std::vector<SiteWeights<T>> guidance_sites;     // concat interaction only
  std::vector<SiteWeights<T>> enhancement_sites;  // concat interaction only
  BasicTensor<T> fuse;                            // (c, c, 1, 1)
  BatchNormParams<T> fuse_bn;

  /// Shares the tensors registered by emit_gmbi under `prefix`.
  static GMBIWeights from_params(ParameterSet<T>& params, const std::string& prefix, const GMBIConfig& cfg);
};

/// sigmoid(guide) * x + x
template <typename T>
BasicTensor<T> ewms(const BasicTensor<T>& guide, const BasicTensor<T>& x, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> interact(const BasicTensor<T>& guide, const BasicTensor<T>& x, const GMBIConfig& cfg,
                        const SiteWeights<T>* site, Tape<T>* tape = nullptr);

/// y_1 = dw_1(x_1); y_i = dw_i(f(y_{i-1}, x_i)). Each dw_i is the dilated
/// depthwise conv followed by batch norm and ReLU.
template <typename T>
std::vector<BasicTensor<T>> forward_guidance(const std::vector<BasicTensor<T>>& subsets, GMBIWeights<T>& weights,
                                             const GMBIConfig& cfg, Mode mode, Tape<T>* tape = nullptr);

template <typename T>
std::vector<BasicTensor<T>> backward_enhancement(const std::vector<BasicTensor<T>>& ys, GMBIWeights<T>& weights,
                                                 const GMBIConfig& cfg, Tape<T>* tape = nullptr);

/// F_in + relu(bn(pw(merge(enhanced scales)))). Output shape equals input shape.
template <typename T>
BasicTensor<T> gmbi_forward(const BasicTensor<T>& input, GMBIWeights<T>& weights, const GMBIConfig& cfg, Mode mode,
                            Tape<T>* tape = nullptr);

/// Appends one block to a graph; node and parameter names start with prefix.
NodeId emit_gmbi(LayerGraph& graph, NodeId input, const GMBIConfig& cfg, const std::string& prefix);

}  // namespace gmbinet
