// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/network.hpp"

#include <cmath>
#include <sstream>

#include "gmbinet/errors.hpp"
#include "gmbinet/ops.hpp"

namespace gmbinet {

std::vector<StageConfig> default_stages() {
  return {
      {1, StageKind::stem, 1, 16},
      {2, StageKind::gmbi, 3, 32},
      {3, StageKind::gmbi, 4, 64},
      {4, StageKind::gmbi, 6, 96},
      {5, StageKind::gmbi, 3, 128},
  };
}

const char* to_string(SkipMode v) {
  switch (v) {
    case SkipMode::sum: return "sum";
    case SkipMode::concat: return "concat";
    case SkipMode::none: return "none";
  }
  return "?";
}

SkipMode parse_skip_mode(const std::string& text) {
  for (const SkipMode v : {SkipMode::sum, SkipMode::concat, SkipMode::none}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown skip mode '" + text + "' (expected sum|concat|none)");
}

int64_t NetworkConfig::stage_channels(std::size_t i) const {
  const int64_t base = stages.at(i).channels;
  if (width == 1.0) return base;
  const int64_t unit = block.mode == ScaleMode::group ? block.scale_dim : 1;
  const auto units = static_cast<int64_t>(std::llround(static_cast<double>(base) * width / static_cast<double>(unit)));
  return std::max<int64_t>(units, 1) * unit;
}

void NetworkConfig::validate() const {
  if (!(width > 0.0)) throw ConfigError("width multiplier must be > 0");
  if (stages.empty()) throw ConfigError("network needs at least one stage");
  if (stages.front().kind != StageKind::stem) throw ConfigError("first stage must be the stem convolution");
  if (input_channels <= 0) throw ConfigError("input channels must be positive");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const StageConfig& s = stages[i];
    if (s.channels <= 0) throw ConfigError("stage " + std::to_string(s.index) + " needs positive channels");
    if (i > 0 && s.kind != StageKind::gmbi) throw ConfigError("only the first stage may be a stem");
    if (s.kind == StageKind::gmbi) {
      if (s.repeats < 0) throw ConfigError("stage " + std::to_string(s.index) + " has negative repeat count");
      GMBIConfig b = block;
      b.channels = stage_channels(i);
      try {
        b.validate();
      } catch (const ConfigError& e) {
        throw ConfigError("stage " + std::to_string(s.index) + ": " + e.what());
      }
    }
  }
}

std::string NetworkConfig::describe() const {
  std::ostringstream os;
  os << "stages=";
  for (std::size_t i = 0; i < stages.size(); ++i) {
    os << (i ? "," : "") << stage_channels(i) << 'x' << stages[i].repeats;
  }
  os << " scale_dim=" << block.scale_dim << " interaction=" << to_string(block.interaction)
     << " fg=" << block.forward_guidance << " be=" << block.backward_enhancement << " mode=" << to_string(block.mode)
     << " be_source=" << (block.enhancement_source == EnhancementSource::enhanced ? "enhanced" : "raw")
     << " be_order=" << (block.enhancement_order == EnhancementOrder::top_down ? "top_down" : "literal")
     << " width=" << width << " skip=" << to_string(skip) << " input_channels=" << input_channels;
  return os.str();
}

NetworkConfig NetworkConfig::gmbinet(int64_t scale_dim) {
  NetworkConfig cfg;
  cfg.block.scale_dim = scale_dim;
  return cfg;
}

NetworkConfig NetworkConfig::toy(int64_t scale_dim) {
  NetworkConfig cfg;
  cfg.stages = {{1, StageKind::stem, 1, 8}, {2, StageKind::gmbi, 1, 16}};
  cfg.block.scale_dim = scale_dim;
  return cfg;
}

namespace {

NodeId conv_bn_relu(LayerGraph& g, NodeId x, const ConvSpec& spec, const std::string& name) {
  return g.relu(g.batch_norm(g.conv(x, spec, name), name + ".bn"));
}

// depthwise k x k (with stride) + pointwise, each followed by BN + ReLU
NodeId dsconv(LayerGraph& g, NodeId x, int64_t in, int64_t out, int64_t stride, const std::string& name) {
  const NodeId d = conv_bn_relu(g, x, ConvSpec::depthwise_3x3(in, 1, stride), name + ".dw");
  return conv_bn_relu(g, d, ConvSpec::pointwise_1x1(in, out), name + ".pw");
}

std::vector<NodeId> add_backbone(LayerGraph& g, const NetworkConfig& cfg) {
  cfg.validate();
  std::vector<NodeId> features;
  NodeId x = g.input();
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageConfig& s = cfg.stages[i];
    const int64_t ch = cfg.stage_channels(i);
    const std::string stage = "stage" + std::to_string(s.index);
    if (s.kind == StageKind::stem) {
      ConvSpec stem;
      stem.in_channels = g.channels(x);
      stem.out_channels = ch;
      stem.kernel = 3;
      stem.stride = 2;
      stem.padding = 1;
      x = conv_bn_relu(g, x, stem, stage + ".conv");
    } else {
      x = dsconv(g, x, g.channels(x), ch, 2, stage + ".down");
      GMBIConfig b = cfg.block;
      b.channels = ch;
      for (int64_t r = 1; r <= s.repeats; ++r) x = emit_gmbi(g, x, b, stage + ".gmbi" + std::to_string(r));
    }
    features.push_back(x);
  }
  return features;
}

}  // namespace

LayerGraph build_backbone(const NetworkConfig& cfg) {
  LayerGraph g(cfg.input_channels);
  const auto features = add_backbone(g, cfg);
  for (std::size_t i = 0; i < features.size(); ++i) g.set_output("E" + std::to_string(i + 1), features[i]);
  return g;
}

LayerGraph build_gmbinet(const NetworkConfig& cfg) {
  LayerGraph g(cfg.input_channels);
  const auto enc = add_backbone(g, cfg);
  const std::size_t stages = enc.size();
  std::vector<NodeId> dec(stages);
  dec[stages - 1] = enc[stages - 1];
  for (std::size_t i = stages - 1; i-- > 0;) {
    const std::string name = "dec" + std::to_string(i + 1);
    const NodeId up = g.upsample(dec[i + 1], 2);
    const int64_t ch = g.channels(enc[i]);
    switch (cfg.skip) {
      case SkipMode::sum:
        dec[i] = g.add(dsconv(g, up, g.channels(up), ch, 1, name), enc[i]);
        break;
      case SkipMode::concat: {
        const NodeId cat = g.concat({up, enc[i]});
        dec[i] = dsconv(g, cat, g.channels(cat), ch, 1, name);
        break;
      }
      case SkipMode::none:
        dec[i] = dsconv(g, up, g.channels(up), ch, 1, name);
        break;
    }
  }
  std::vector<NodeId> sides(stages);
  for (std::size_t i = 0; i < stages; ++i) {
    const NodeId head = g.conv(dec[i], ConvSpec::pointwise_1x1(g.channels(dec[i]), 1), "head" + std::to_string(i + 1));
    sides[i] = g.sigmoid(head);
  }
  const NodeId final_map = g.upsample(sides[0], 2);
  for (std::size_t i = 0; i < stages; ++i) g.set_output("E" + std::to_string(i + 1), enc[i]);
  for (std::size_t i = 0; i < stages; ++i) g.set_output("D" + std::to_string(i + 1), dec[i]);
  for (std::size_t i = 0; i < stages; ++i) g.set_output("side" + std::to_string(i + 1), sides[i]);
  g.set_output("final", final_map);
  return g;
}

LayerGraph build_classifier(int64_t num_classes, const NetworkConfig& cfg) {
  if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
  LayerGraph g(cfg.input_channels);
  const auto enc = add_backbone(g, cfg);
  const NodeId pooled = g.global_pool(enc.back());
  const NodeId logits = g.conv(pooled, ConvSpec::pointwise_1x1(g.channels(pooled), num_classes, true), "classifier");
  for (std::size_t i = 0; i < enc.size(); ++i) g.set_output("E" + std::to_string(i + 1), enc[i]);
  g.set_output("logits", logits);
  return g;
}

namespace {

int count_roles(const LayerGraph& g, const char* prefix) {
  int n = 0;
  while (g.has_output(prefix + std::to_string(n + 1))) ++n;
  return n;
}

void check_divisible(const Shape& s, int64_t reduction) {
  if (s.h % reduction != 0 || s.w % reduction != 0) {
    const int64_t ph = (reduction - s.h % reduction) % reduction;
    const int64_t pw = (reduction - s.w % reduction) % reduction;
    throw ShapeError("input " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is not divisible by " +
                     std::to_string(reduction) + "; pad by " + std::to_string(ph) + " rows and " +
                     std::to_string(pw) + " columns");
  }
}

}  // namespace

template <typename T>
std::vector<BasicTensor<T>> encode(const BasicTensor<T>& image, const LayerGraph& graph, ParameterSet<T>& params,
                                   Mode mode, Tape<T>* tape) {
  const int stages = count_roles(graph, "E");
  if (stages == 0) throw ConfigError("graph has no encoder outputs");
  check_divisible(image.shape(), int64_t{1} << stages);
  std::vector<NodeId> targets;
  for (int i = 1; i <= stages; ++i) targets.push_back(graph.output("E" + std::to_string(i)));
  return execute<T>(graph, params, {{graph.input(), image}}, targets, mode, tape);
}

template <typename T>
DeepSupervisionOutputs<T> decode(const std::vector<BasicTensor<T>>& features, const LayerGraph& graph,
                                 ParameterSet<T>& params, Mode mode, Tape<T>* tape) {
  const int stages = count_roles(graph, "side");
  if (stages == 0) throw ConfigError("graph has no decoder outputs");
  if (static_cast<int>(features.size()) != stages) {
    throw ShapeError("decode expects " + std::to_string(stages) + " encoder features, got " +
                     std::to_string(features.size()));
  }
  const auto shapes_ok = [&](std::size_t i) {
    const NodeId id = graph.output("E" + std::to_string(i + 1));
    return features[i].shape().c == graph.channels(id);
  };
  Feeds<T> feeds;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!shapes_ok(i)) {
      throw ShapeError("encoder feature E" + std::to_string(i + 1) + " has " + std::to_string(features[i].shape().c) +
                       " channels, decoder expects " +
                       std::to_string(graph.channels(graph.output("E" + std::to_string(i + 1)))));
    }
    feeds.emplace_back(graph.output("E" + std::to_string(i + 1)), features[i]);
  }
  std::vector<NodeId> targets;
  targets.push_back(graph.output("final"));
  for (int i = 1; i <= stages; ++i) targets.push_back(graph.output("side" + std::to_string(i)));
  for (int i = 1; i <= stages; ++i) targets.push_back(graph.output("D" + std::to_string(i)));
  const auto values = execute<T>(graph, params, feeds, targets, mode, tape);
  DeepSupervisionOutputs<T> out;
  out.final_map = values[0];
  out.side_maps.assign(values.begin() + 1, values.begin() + 1 + stages);
  out.decoder_features.assign(values.begin() + 1 + stages, values.end());
  return out;
}

template <typename T>
DeepSupervisionOutputs<T> forward_saliency(const BasicTensor<T>& image, const LayerGraph& graph,
                                           ParameterSet<T>& params, Mode mode, Tape<T>* tape) {
  const int stages = count_roles(graph, "side");
  if (stages == 0) throw ConfigError("graph has no decoder outputs");
  check_divisible(image.shape(), int64_t{1} << stages);
  std::vector<NodeId> targets;
  targets.push_back(graph.output("final"));
  for (int i = 1; i <= stages; ++i) targets.push_back(graph.output("side" + std::to_string(i)));
  const auto values = execute<T>(graph, params, {{graph.input(), image}}, targets, mode, tape);
  DeepSupervisionOutputs<T> out;
  out.final_map = values[0];
  out.side_maps.assign(values.begin() + 1, values.end());
  return out;
}

Model Model::saliency(const NetworkConfig& cfg, uint64_t seed) {
  Model m{cfg, build_gmbinet(cfg), {}, 0};
  m.params = ParameterSet<float>::initialize(m.graph, seed);
  return m;
}

Model Model::classifier(int64_t num_classes, const NetworkConfig& cfg, uint64_t seed) {
  Model m{cfg, build_classifier(num_classes, cfg), {}, num_classes};
  m.params = ParameterSet<float>::initialize(m.graph, seed);
  return m;
}

Tensor predict(const Tensor& image, Model& model, const PredictOptions& options) {
  const Shape s = image.shape();
  if (!image.defined() || s.numel() == 0) throw ShapeError("predict on an empty image");
  if (model.num_classes != 0) throw ConfigError("predict needs a saliency model");
  Tensor x = standardize(image);
  const int64_t size = options.inference_size;
  if (s.h != size || s.w != size) x = resize_bilinear(x, size, size);
  auto out = forward_saliency(x, model.graph, model.params, Mode::eval);
  Tensor map = out.final_map;
  if (map.shape().h != s.h || map.shape().w != s.w) map = resize_bilinear(map, s.h, s.w);
  return map;
}

Tensor classify(const Tensor& image, Model& model) {
  if (model.num_classes == 0) throw ConfigError("classify needs a classifier model");
  const Tensor x = standardize(image);
  const auto values =
      execute<float>(model.graph, model.params, {{model.graph.input(), x}}, {model.graph.output("logits")}, Mode::eval);
  return values.front();
}

template std::vector<Tensor> encode(const Tensor&, const LayerGraph&, ParameterSet<float>&, Mode, Tape<float>*);
template std::vector<Tensor64> encode(const Tensor64&, const LayerGraph&, ParameterSet<double>&, Mode, Tape<double>*);
template DeepSupervisionOutputs<float> decode(const std::vector<Tensor>&, const LayerGraph&, ParameterSet<float>&,
                                              Mode, Tape<float>*);
template DeepSupervisionOutputs<double> decode(const std::vector<Tensor64>&, const LayerGraph&,
                                               ParameterSet<double>&, Mode, Tape<double>*);
template DeepSupervisionOutputs<float> forward_saliency(const Tensor&, const LayerGraph&, ParameterSet<float>&, Mode,
                                                        Tape<float>*);
template DeepSupervisionOutputs<double> forward_saliency(const Tensor64&, const LayerGraph&, ParameterSet<double>&,
                                                         Mode, Tape<double>*);

}  // namespace gmbinet
