// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/gmbi.hpp"

#include "gmbinet/errors.hpp"
#include "gmbinet/ops.hpp"

namespace gmbinet {

const char* to_string(Interaction v) {
  switch (v) {
    case Interaction::ewms: return "ewms";
    case Interaction::sum: return "sum";
    case Interaction::mul: return "mul";
    case Interaction::concat: return "concat";
    case Interaction::none: return "none";
  }
  return "?";
}

const char* to_string(ScaleMode v) {
  switch (v) {
    case ScaleMode::group: return "group";
    case ScaleMode::branch: return "branch";
    case ScaleMode::single: return "single";
  }
  return "?";
}

Interaction parse_interaction(const std::string& text) {
  for (const Interaction v :
       {Interaction::ewms, Interaction::sum, Interaction::mul, Interaction::concat, Interaction::none}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown interaction '" + text + "' (expected ewms|sum|mul|concat|none)");
}

ScaleMode parse_scale_mode(const std::string& text) {
  for (const ScaleMode v : {ScaleMode::group, ScaleMode::branch, ScaleMode::single}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown scale mode '" + text + "' (expected group|branch|single)");
}

void GMBIConfig::validate() const {
  if (channels <= 0) throw ConfigError("GMBI channels must be positive");
  if (scale_dim <= 0) throw ConfigError("GMBI scale dimension must be positive");
  if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("GMBI kernel must be odd and positive");
  if (mode == ScaleMode::group && channels % scale_dim != 0) {
    throw ConfigError("GMBI channels " + std::to_string(channels) + " not divisible by scale dimension " +
                      std::to_string(scale_dim));
  }
}

ConvSpec GMBIConfig::depthwise_spec(int64_t scale_index) const {
  ConvSpec s;
  s.in_channels = path_channels();
  s.out_channels = path_channels();
  s.groups = path_channels();
  s.kernel = kernel;
  s.dilation = scale_index;
  s.padding = scale_index * (kernel - 1) / 2;
  return s;
}

std::string GMBIConfig::str() const {
  return "gmbi(c=" + std::to_string(channels) + ", n=" + std::to_string(scale_dim) + ", k=" + std::to_string(kernel) +
         ", " + to_string(interaction) + ", fg=" + (forward_guidance ? "1" : "0") +
         ", be=" + (backward_enhancement ? "1" : "0") + ", " + to_string(mode) +
         (enhancement_source == EnhancementSource::raw ? ", be-raw" : "") +
         (enhancement_order == EnhancementOrder::literal ? ", be-literal" : "") + ")";
}

namespace {

std::string dw_name(const std::string& prefix, int64_t i) { return prefix + ".dw" + std::to_string(i); }
std::string fg_name(const std::string& prefix, int64_t target) {
  return prefix + ".fg" + std::to_string(target) + ".cat";
}
std::string be_name(const std::string& prefix, int64_t target) {
  return prefix + ".be" + std::to_string(target) + ".cat";
}
// 1-based target scale of enhancement site s
int64_t enhancement_target(const GMBIConfig& cfg, int64_t site) {
  return cfg.enhancement_order == EnhancementOrder::top_down ? site + 1 : site + 2;
}

ConvSpec site_spec(const GMBIConfig& cfg) {
  return ConvSpec::pointwise_1x1(2 * cfg.path_channels(), cfg.path_channels(), true);
}

template <typename T>
BatchNormParams<T> bn_params(ParameterSet<T>& params, const std::string& name) {
  return {params.get(name + ".gamma"), params.get(name + ".beta"), params.get(name + ".running_mean"),
          params.get(name + ".running_var")};
}

template <typename T>
BasicTensor<T> bn_relu(const BasicTensor<T>& x, BatchNormParams<T>& p, Mode mode, Tape<T>* tape) {
  const BatchNormOptions opt{mode == Mode::train, 0.1, 1e-5};
  return relu(batch_norm(x, p.gamma, p.beta, p.running_mean, p.running_var, opt, tape), tape);
}

template <typename T>
BasicTensor<T> depthwise_block(const BasicTensor<T>& x, GMBIWeights<T>& w, const GMBIConfig& cfg, int64_t scale,
                               Mode mode, Tape<T>* tape) {
  const auto idx = static_cast<std::size_t>(scale - 1);
  const BasicTensor<T> no_bias;
  return bn_relu(conv2d(x, w.depthwise[idx], no_bias, cfg.depthwise_spec(scale), tape), w.depthwise_bn[idx], mode,
                 tape);
}

}  // namespace

template <typename T>
GMBIWeights<T> GMBIWeights<T>::from_params(ParameterSet<T>& params, const std::string& prefix,
                                           const GMBIConfig& cfg) {
  cfg.validate();
  GMBIWeights<T> w;
  for (int64_t i = 1; i <= cfg.scales(); ++i) {
    w.depthwise.push_back(params.get(dw_name(prefix, i) + ".weight"));
    w.depthwise_bn.push_back(bn_params(params, dw_name(prefix, i) + ".bn"));
  }
  if (cfg.interaction == Interaction::concat) {
    if (cfg.guidance_active()) {
      for (int64_t i = 2; i <= cfg.scales(); ++i) {
        w.guidance_sites.push_back({params.get(fg_name(prefix, i) + ".weight"), params.get(fg_name(prefix, i) + ".bias")});
      }
    }
    if (cfg.enhancement_active()) {
      for (int64_t s = 0; s + 1 < cfg.scales(); ++s) {
        const std::string n = be_name(prefix, enhancement_target(cfg, s));
        w.enhancement_sites.push_back({params.get(n + ".weight"), params.get(n + ".bias")});
      }
    }
  }
  w.fuse = params.get(prefix + ".fuse.weight");
  w.fuse_bn = bn_params(params, prefix + ".fuse.bn");
  return w;
}

template <typename T>
BasicTensor<T> ewms(const BasicTensor<T>& guide, const BasicTensor<T>& x, Tape<T>* tape) {
  return add(mul(sigmoid(guide, tape), x, tape), x, tape);
}

template <typename T>
BasicTensor<T> interact(const BasicTensor<T>& guide, const BasicTensor<T>& x, const GMBIConfig& cfg,
                        const SiteWeights<T>* site, Tape<T>* tape) {
  switch (cfg.interaction) {
    case Interaction::ewms: return ewms(guide, x, tape);
    case Interaction::sum: return add(guide, x, tape);
    case Interaction::mul: return mul(guide, x, tape);
    case Interaction::none: return x;
    case Interaction::concat: {
      if (site == nullptr) throw ConfigError("concat interaction needs site weights");
      return conv2d(concat<T>({guide, x}, tape), site->weight, site->bias, site_spec(cfg), tape);
    }
  }
  return x;
}

template <typename T>
std::vector<BasicTensor<T>> forward_guidance(const std::vector<BasicTensor<T>>& subsets, GMBIWeights<T>& weights,
                                             const GMBIConfig& cfg, Mode mode, Tape<T>* tape) {
  const int64_t n = cfg.scales();
  if (static_cast<int64_t>(subsets.size()) != n) {
    throw ShapeError("forward_guidance: got " + std::to_string(subsets.size()) + " subsets, scale dimension is " +
                     std::to_string(n));
  }
  std::vector<BasicTensor<T>> ys;
  ys.reserve(subsets.size());
  for (int64_t i = 1; i <= n; ++i) {
    BasicTensor<T> x = subsets[static_cast<std::size_t>(i - 1)];
    if (i > 1 && cfg.guidance_active()) {
      const SiteWeights<T>* site = cfg.interaction == Interaction::concat
                                       ? &weights.guidance_sites[static_cast<std::size_t>(i - 2)]
                                       : nullptr;
      x = interact(ys.back(), x, cfg, site, tape);
    }
    ys.push_back(depthwise_block(x, weights, cfg, i, mode, tape));
  }
  return ys;
}

template <typename T>
std::vector<BasicTensor<T>> backward_enhancement(const std::vector<BasicTensor<T>>& ys, GMBIWeights<T>& weights,
                                                 const GMBIConfig& cfg, Tape<T>* tape) {
  const int64_t n = cfg.scales();
  if (static_cast<int64_t>(ys.size()) != n) {
    throw ShapeError("backward_enhancement: got " + std::to_string(ys.size()) + " features, scale dimension is " +
                     std::to_string(n));
  }
  std::vector<BasicTensor<T>> out = ys;
  if (!cfg.enhancement_active()) return out;
  auto site_for = [&](int64_t s) -> const SiteWeights<T>* {
    return cfg.interaction == Interaction::concat ? &weights.enhancement_sites[static_cast<std::size_t>(s)] : nullptr;
  };
  if (cfg.enhancement_order == EnhancementOrder::top_down) {
    for (int64_t i = n - 1; i >= 1; --i) {
      const auto target = static_cast<std::size_t>(i - 1);
      const BasicTensor<T>& guide =
          cfg.enhancement_source == EnhancementSource::enhanced ? out[target + 1] : ys[target + 1];
      out[target] = interact(guide, ys[target], cfg, site_for(i - 1), tape);
    }
  } else {
    for (int64_t i = 2; i <= n; ++i) {
      const auto target = static_cast<std::size_t>(i - 1);
      out[target] = interact(ys[target], ys[target - 1], cfg, site_for(i - 2), tape);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> gmbi_forward(const BasicTensor<T>& input, GMBIWeights<T>& weights, const GMBIConfig& cfg, Mode mode,
                            Tape<T>* tape) {
  cfg.validate();
  if (input.shape().c != cfg.channels) {
    throw ShapeError("gmbi_forward: input has " + std::to_string(input.shape().c) + " channels, block expects " +
                     std::to_string(cfg.channels));
  }
  const int64_t n = cfg.scales();
  std::vector<BasicTensor<T>> subsets;
  if (cfg.mode == ScaleMode::group) {
    subsets = channel_split(input, n, tape);
  } else {
    subsets.assign(static_cast<std::size_t>(n), input);
  }
  const auto ys = forward_guidance(subsets, weights, cfg, mode, tape);
  const auto enhanced = backward_enhancement(ys, weights, cfg, tape);
  BasicTensor<T> merged;
  if (cfg.mode == ScaleMode::group) {
    merged = n == 1 ? enhanced.front() : concat(enhanced, tape);
  } else {
    merged = enhanced.front();
    for (std::size_t i = 1; i < enhanced.size(); ++i) merged = add(merged, enhanced[i], tape);
  }
  const BasicTensor<T> no_bias;
  const BasicTensor<T> fused =
      bn_relu(conv2d(merged, weights.fuse, no_bias, ConvSpec::pointwise_1x1(cfg.channels, cfg.channels), tape),
              weights.fuse_bn, mode, tape);
  return add(input, fused, tape);
}

NodeId emit_gmbi(LayerGraph& graph, NodeId input, const GMBIConfig& cfg, const std::string& prefix) {
  cfg.validate();
  if (graph.channels(input) != cfg.channels) {
    throw ShapeError("GMBI block '" + prefix + "' expects " + std::to_string(cfg.channels) + " channels, input has " +
                     std::to_string(graph.channels(input)));
  }
  const int64_t n = cfg.scales();
  const int64_t p = cfg.path_channels();
  auto dw_block = [&](NodeId x, int64_t i) {
    const NodeId c = graph.conv(x, cfg.depthwise_spec(i), dw_name(prefix, i));
    return graph.relu(graph.batch_norm(c, dw_name(prefix, i) + ".bn"));
  };
  auto link = [&](NodeId guide, NodeId x, const std::string& site) -> NodeId {
    switch (cfg.interaction) {
      case Interaction::ewms: return graph.add(graph.mul(graph.sigmoid(guide), x), x);
      case Interaction::sum: return graph.add(guide, x);
      case Interaction::mul: return graph.mul(guide, x);
      case Interaction::none: return x;
      case Interaction::concat: return graph.conv(graph.concat({guide, x}), site_spec(cfg), site);
    }
    return x;
  };

  std::vector<NodeId> subsets;
  for (int64_t i = 0; i < n; ++i) {
    subsets.push_back(cfg.mode == ScaleMode::group ? graph.slice(input, i * p, p) : input);
  }
  std::vector<NodeId> ys;
  for (int64_t i = 1; i <= n; ++i) {
    NodeId x = subsets[static_cast<std::size_t>(i - 1)];
    if (i > 1 && cfg.guidance_active()) x = link(ys.back(), x, fg_name(prefix, i));
    ys.push_back(dw_block(x, i));
  }
  std::vector<NodeId> enhanced = ys;
  if (cfg.enhancement_active()) {
    if (cfg.enhancement_order == EnhancementOrder::top_down) {
      for (int64_t i = n - 1; i >= 1; --i) {
        const auto t = static_cast<std::size_t>(i - 1);
        const NodeId guide = cfg.enhancement_source == EnhancementSource::enhanced ? enhanced[t + 1] : ys[t + 1];
        enhanced[t] = link(guide, ys[t], be_name(prefix, i));
      }
    } else {
      for (int64_t i = 2; i <= n; ++i) {
        const auto t = static_cast<std::size_t>(i - 1);
        enhanced[t] = link(ys[t], ys[t - 1], be_name(prefix, i));
      }
    }
  }
  NodeId merged = enhanced.front();
  if (cfg.mode == ScaleMode::group) {
    if (n > 1) merged = graph.concat(enhanced);
  } else {
    for (std::size_t i = 1; i < enhanced.size(); ++i) merged = graph.add(merged, enhanced[i]);
  }
  const NodeId fuse = graph.conv(merged, ConvSpec::pointwise_1x1(cfg.channels, cfg.channels), prefix + ".fuse");
  const NodeId act = graph.relu(graph.batch_norm(fuse, prefix + ".fuse.bn"));
  return graph.add(input, act);
}

#define GMBINET_INSTANTIATE_GMBI(T)                                                                               \
  template struct GMBIWeights<T>;                                                                                \
  template BasicTensor<T> ewms(const BasicTensor<T>&, const BasicTensor<T>&, Tape<T>*);                          \
  template BasicTensor<T> interact(const BasicTensor<T>&, const BasicTensor<T>&, const GMBIConfig&,              \
                                   const SiteWeights<T>*, Tape<T>*);                                             \
  template std::vector<BasicTensor<T>> forward_guidance(const std::vector<BasicTensor<T>>&, GMBIWeights<T>&,     \
                                                        const GMBIConfig&, Mode, Tape<T>*);                      \
  template std::vector<BasicTensor<T>> backward_enhancement(const std::vector<BasicTensor<T>>&, GMBIWeights<T>&, \
                                                            const GMBIConfig&, Tape<T>*);                        \
  template BasicTensor<T> gmbi_forward(const BasicTensor<T>&, GMBIWeights<T>&, const GMBIConfig&, Mode, Tape<T>*);

GMBINET_INSTANTIATE_GMBI(float)
GMBINET_INSTANTIATE_GMBI(double)

#undef GMBINET_INSTANTIATE_GMBI

}  // namespace gmbinet
