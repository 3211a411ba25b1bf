// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/complexity.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "gmbinet/errors.hpp"
#include "gmbinet/executor.hpp"
#include "gmbinet/gmbi.hpp"
#include "gmbinet/parallel.hpp"
#include "gmbinet/report.hpp"

namespace gmbinet {

const char* to_string(CostFamily f) {
  switch (f) {
    case CostFamily::dsconv: return "dsconv";
    case CostFamily::multibranch: return "multibranch";
    case CostFamily::mi: return "mi";
    case CostFamily::gmbi: return "gmbi";
  }
  return "?";
}

CostFamily parse_cost_family(const std::string& text) {
  for (const auto f : {CostFamily::dsconv, CostFamily::multibranch, CostFamily::mi, CostFamily::gmbi}) {
    if (text == to_string(f)) return f;
  }
  throw ConfigError("unknown cost family '" + text + "' (expected dsconv, multibranch, mi or gmbi)");
}

void CostQuery::validate() const {
  if (k < 1 || c < 1 || h < 1 || w < 1 || n < 1) {
    throw ConfigError("cost query dimensions must be positive (k=" + std::to_string(k) + " c=" + std::to_string(c) +
                      " h=" + std::to_string(h) + " w=" + std::to_string(w) + " n=" + std::to_string(n) + ")");
  }
  if (family == CostFamily::gmbi && c % n != 0) {
    throw ConfigError("gmbi cost needs c divisible by n (c=" + std::to_string(c) + ", n=" + std::to_string(n) + ")");
  }
}

int64_t cost_dsconv(const CostQuery& q) {
  const int64_t hw = q.h * q.w;
  return q.k * q.k * q.c * hw + q.c * q.c * hw;
}

int64_t cost_multibranch(const CostQuery& q) {
  const int64_t hw = q.h * q.w;
  return q.n * (q.k * q.k * q.c * hw + q.c * q.c * hw) + q.c * q.c * hw;
}

int64_t cost_mi(const CostQuery& q) {
  const int64_t hw = q.h * q.w;
  return q.n * (q.k * q.k * q.c * hw) + q.c * (q.n * hw) + q.c * q.c * hw;
}

int64_t cost_gmbi(const CostQuery& q) {
  CostQuery g = q;
  g.family = CostFamily::gmbi;
  g.validate();
  const int64_t hw = q.h * q.w;
  return q.n * (q.k * q.k * (q.c / q.n) * hw) + q.c * q.c * hw;
}

int64_t analytic_cost(const CostQuery& q) {
  q.validate();
  switch (q.family) {
    case CostFamily::dsconv: return cost_dsconv(q);
    case CostFamily::multibranch: return cost_multibranch(q);
    case CostFamily::mi: return cost_mi(q);
    case CostFamily::gmbi: return cost_gmbi(q);
  }
  return 0;
}

namespace {

ConvSpec dilated_depthwise(int64_t channels, int64_t k, int64_t dilation) {
  ConvSpec s;
  s.in_channels = s.out_channels = s.groups = channels;
  s.kernel = k;
  s.dilation = dilation;
  s.padding = dilation * (k - 1) / 2;
  return s;
}

NodeId conv_bn_relu(LayerGraph& g, NodeId x, const ConvSpec& spec, const std::string& name) {
  return g.relu(g.batch_norm(g.conv(x, spec, name), name + ".bn"));
}

}  // namespace

LayerGraph build_cost_block(const CostQuery& q) {
  q.validate();
  if (q.k % 2 == 0) throw ConfigError("cost blocks need an odd kernel size, got " + std::to_string(q.k));
  LayerGraph g(q.c);
  const NodeId x = g.input();
  const ConvSpec pw = ConvSpec::pointwise_1x1(q.c, q.c);
  NodeId out = x;
  switch (q.family) {
    case CostFamily::dsconv:
      out = conv_bn_relu(g, conv_bn_relu(g, x, dilated_depthwise(q.c, q.k, 1), "dw"), pw, "pw");
      break;
    case CostFamily::multibranch: {
      NodeId acc = -1;
      for (int64_t i = 1; i <= q.n; ++i) {
        const std::string name = "branch" + std::to_string(i);
        const NodeId dw = conv_bn_relu(g, x, dilated_depthwise(q.c, q.k, i), name + ".dw");
        const NodeId b = conv_bn_relu(g, dw, pw, name + ".pw");
        acc = acc < 0 ? b : g.add(acc, b);
      }
      out = conv_bn_relu(g, acc, pw, "fuse");
      break;
    }
    case CostFamily::mi: {
      std::vector<NodeId> branches;
      for (int64_t i = 1; i <= q.n; ++i) {
        branches.push_back(conv_bn_relu(g, x, dilated_depthwise(q.c, q.k, i), "branch" + std::to_string(i) + ".dw"));
      }
      NodeId merged = q.n == 1 ? branches.front() : g.shuffle(g.concat(branches), q.n);
      ConvSpec mix = ConvSpec::pointwise_1x1(q.n * q.c, q.c);
      mix.groups = q.c;  // each output channel mixes its own n scale responses
      merged = conv_bn_relu(g, merged, mix, "mix");
      out = conv_bn_relu(g, merged, pw, "fuse");
      break;
    }
    case CostFamily::gmbi: {
      GMBIConfig cfg;
      cfg.channels = q.c;
      cfg.scale_dim = q.n;
      cfg.kernel = q.k;
      out = emit_gmbi(g, x, cfg, "gmbi");
      break;
    }
  }
  g.set_output("out", out);
  return g;
}

CostReport count_graph(const LayerGraph& graph, const Shape& input) {
  CostReport report;
  report.input = input;
  const auto shapes = graph.infer_shapes(input);
  const auto& params = graph.params();
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    const Node& node = graph.nodes()[i];
    NodeCost nc;
    nc.id = static_cast<NodeId>(i);
    nc.name = node.name;
    nc.kind = node.kind;
    nc.output = shapes[i];
    const int64_t out_elems = shapes[i].numel();
    for (const std::size_t p : node.params) {
      if (params[p].trainable) nc.params += params[p].shape.numel();
    }
    switch (node.kind) {
      case NodeKind::conv:
        nc.macs = out_elems * node.conv.kernel * node.conv.kernel * node.conv.in_per_group();
        if (node.conv.bias) nc.secondary_ops = out_elems;
        break;
      case NodeKind::batch_norm: nc.secondary_ops = 2 * out_elems; break;
      case NodeKind::relu:
      case NodeKind::sigmoid:
      case NodeKind::add:
      case NodeKind::mul: nc.secondary_ops = out_elems; break;
      case NodeKind::upsample: nc.secondary_ops = 4 * out_elems; break;
      case NodeKind::global_pool: nc.secondary_ops = shapes[static_cast<std::size_t>(node.inputs.front())].numel(); break;
      case NodeKind::input:
      case NodeKind::slice:
      case NodeKind::concat:
      case NodeKind::shuffle: break;
    }
    report.macs += nc.macs;
    report.params += nc.params;
    report.secondary_ops += nc.secondary_ops;
    report.nodes.push_back(std::move(nc));
  }
  return report;
}

std::vector<FamilyRow> compare_families(const CostQuery& base, const std::vector<int64_t>& scale_dims,
                                        const std::vector<CostFamily>& families) {
  std::vector<FamilyRow> rows;
  for (const CostFamily family : families) {
    for (const int64_t n : scale_dims) {
      CostQuery q = base;
      q.family = family;
      q.n = n;
      FamilyRow row;
      row.family = family;
      row.n = n;
      row.analytic_macs = analytic_cost(q);
      const CostReport counted = count_graph(build_cost_block(q), Shape{1, q.c, q.h, q.w});
      row.counted_macs = counted.macs;
      row.params = counted.params;
      row.delta = static_cast<double>(row.counted_macs - row.analytic_macs) / static_cast<double>(row.analytic_macs);
      rows.push_back(row);
    }
  }
  return rows;
}

LatencyReport bench_latency(const LayerGraph& graph, ParameterSet<float>& params, const Shape& input, int repeats,
                            int warmup, uint64_t seed) {
  if (repeats < 10) throw ConfigError("bench needs at least 10 timed repeats, got " + std::to_string(repeats));
  if (warmup < 3) throw ConfigError("bench needs at least 3 warm-up runs, got " + std::to_string(warmup));
  graph.infer_shapes(input);
  std::mt19937_64 rng(seed);
  std::vector<float> values(static_cast<std::size_t>(input.numel()));
  for (auto& v : values) v = static_cast<float>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  const Tensor image(input, std::move(values));

  LatencyReport report;
  report.input = input;
  report.warmup = warmup;
  report.threads = thread_count();
  report.hardware = hardware_descriptor();
  for (int i = 0; i < warmup; ++i) run_outputs(graph, params, image, Mode::eval);
  for (int i = 0; i < repeats; ++i) {
    const Stopwatch sw;
    run_outputs(graph, params, image, Mode::eval);
    report.timings_ms.push_back(sw.elapsed_ms());
  }
  const auto& t = report.timings_ms;
  report.mean_ms = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
  std::vector<double> sorted = t;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  report.median_ms = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  report.images_per_second = report.mean_ms > 0.0 ? 1000.0 * static_cast<double>(input.n) / report.mean_ms : 0.0;
  return report;
}

}  // namespace gmbinet
