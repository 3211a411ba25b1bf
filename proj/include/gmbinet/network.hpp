// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmbinet/executor.hpp"
#include "gmbinet/gmbi.hpp"
#include "gmbinet/graph.hpp"
#include "gmbinet/params.hpp"

namespace gmbinet {

enum class StageKind {
  stem,  ///< 3x3 conv, stride 2
  gmbi,  ///< stride-2 DSConv channel expansion, then a stack of GMBI blocks
};

struct StageConfig {
  int index = 1;
  StageKind kind = StageKind::gmbi;
  int64_t repeats = 1;
  int64_t channels = 16;
};

/// Five stages: 16 (stem), then 32/64/96/128 channels with 3/4/6/3 blocks.
std::vector<StageConfig> default_stages();

/// How decoder stage i combines the upsampled D_{i+1} with E_i.
enum class SkipMode {
  sum,     ///< D_i = DSConv(up(D_{i+1})) + E_i
  concat,  ///< D_i = DSConv(cat(up(D_{i+1}), E_i))
  none,    ///< D_i = DSConv(up(D_{i+1}))
};

const char* to_string(SkipMode v);
SkipMode parse_skip_mode(const std::string& text);

struct NetworkConfig {
  std::vector<StageConfig> stages = default_stages();
  int64_t input_channels = 3;
  GMBIConfig block;  ///< template for every block; channels are set per stage
  double width = 1.0;
  SkipMode skip = SkipMode::sum;

  void validate() const;
  /// Channel count of stage i (0-based) after the width multiplier.
  int64_t stage_channels(std::size_t i) const;
  /// Total spatial reduction of the encoder, 2^stages.
  int64_t reduction() const { return int64_t{1} << stages.size(); }
  std::string describe() const;

  static NetworkConfig gmbinet(int64_t scale_dim = 4);
  /// Two-stage toy network (8-channel stem, one 16-channel GMBI block).
  static NetworkConfig toy(int64_t scale_dim = 4);
};

/// Encoder only; outputs E1..E{S}.
LayerGraph build_backbone(const NetworkConfig& cfg);
/// Encoder-decoder with deep supervision; outputs E*, D*, side1..side{S}
/// (sigmoid maps at H/2^i) and final (input resolution).
LayerGraph build_gmbinet(const NetworkConfig& cfg);
/// Backbone, global average pooling and a linear head; output "logits".
LayerGraph build_classifier(int64_t num_classes, const NetworkConfig& cfg);

template <typename T>
struct DeepSupervisionOutputs {
  BasicTensor<T> final_map;                   // (n, 1, H, W)
  std::vector<BasicTensor<T>> side_maps;      // side i at H/2^i, index 0 = stage 1
  std::vector<BasicTensor<T>> decoder_features;  // D1..D{S}
};

template <typename T>
std::vector<BasicTensor<T>> encode(const BasicTensor<T>& image, const LayerGraph& graph, ParameterSet<T>& params,
                                   Mode mode, Tape<T>* tape = nullptr);

template <typename T>
DeepSupervisionOutputs<T> decode(const std::vector<BasicTensor<T>>& features, const LayerGraph& graph,
                                 ParameterSet<T>& params, Mode mode, Tape<T>* tape = nullptr);

/// encode + decode in one pass.
template <typename T>
DeepSupervisionOutputs<T> forward_saliency(const BasicTensor<T>& image, const LayerGraph& graph,
                                           ParameterSet<T>& params, Mode mode, Tape<T>* tape = nullptr);

/// Graph, configuration and weights of one network.
struct Model {
  NetworkConfig config;
  LayerGraph graph;
  ParameterSet<float> params;
  int64_t num_classes = 0;  ///< 0 for the saliency network

  static Model saliency(const NetworkConfig& cfg, uint64_t seed);
  static Model classifier(int64_t num_classes, const NetworkConfig& cfg, uint64_t seed);
};

struct PredictOptions {
  int64_t inference_size = 512;
};

/// Per-image z-score, resize to inference_size, eval-mode forward, and resize
/// of the final map back to the input (H, W). Values lie in [0, 1].
Tensor predict(const Tensor& image, Model& model, const PredictOptions& options = {});

/// Logits (n, classes, 1, 1) of a classifier model on standardized input.
Tensor classify(const Tensor& image, Model& model);

}  // namespace gmbinet
