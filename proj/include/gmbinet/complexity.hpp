// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmbinet/graph.hpp"
#include "gmbinet/params.hpp"

namespace gmbinet {

enum class CostFamily { dsconv, multibranch, mi, gmbi };

const char* to_string(CostFamily f);
CostFamily parse_cost_family(const std::string& text);

struct CostQuery {
  int64_t k = 3;
  int64_t c = 32;
  int64_t h = 128;
  int64_t w = 128;
  int64_t n = 4;
  CostFamily family = CostFamily::gmbi;

  /// Positive dimensions; c divisible by n for the gmbi family.
  void validate() const;
};

/// k^2 c h w + c^2 h w
int64_t cost_dsconv(const CostQuery& q);
/// n (k^2 c h w + c^2 h w) + c^2 h w
int64_t cost_multibranch(const CostQuery& q);
/// n k^2 c h w + c (n h w) + c^2 h w
int64_t cost_mi(const CostQuery& q);
/// n k^2 (c/n) h w + c^2 h w; throws ConfigError when n does not divide c.
int64_t cost_gmbi(const CostQuery& q);
int64_t analytic_cost(const CostQuery& q);

/// Single block of the queried family as a graph on a c-channel input, using
/// the same layers the formulas count (normalization and activations are
/// included but contribute only secondary ops).
LayerGraph build_cost_block(const CostQuery& q);

struct NodeCost {
  NodeId id = 0;
  std::string name;
  NodeKind kind = NodeKind::input;
  Shape output;
  int64_t macs = 0;           ///< convolution multiply-accumulates
  int64_t params = 0;         ///< trainable parameter values owned by the node
  int64_t secondary_ops = 0;  ///< normalization, activation, elementwise, interpolation
};

struct CostReport {
  Shape input;
  int64_t macs = 0;
  int64_t params = 0;
  int64_t secondary_ops = 0;
  std::vector<NodeCost> nodes;

  /// Headline operation count: MACs, or 2 x MACs when counting FLOPs.
  int64_t flops(bool multiply_add_as_two = false) const { return multiply_add_as_two ? 2 * macs : macs; }
};

/// Exact per-node counts. Conv MACs = out_elems * k^2 * in_channels / groups.
CostReport count_graph(const LayerGraph& graph, const Shape& input);

struct FamilyRow {
  CostFamily family = CostFamily::gmbi;
  int64_t n = 1;
  int64_t analytic_macs = 0;
  int64_t counted_macs = 0;
  int64_t params = 0;
  double delta = 0.0;  ///< (counted - analytic) / analytic
};

/// One row per (family, n); each counted value comes from build_cost_block.
std::vector<FamilyRow> compare_families(const CostQuery& base, const std::vector<int64_t>& scale_dims,
                                        const std::vector<CostFamily>& families);

struct LatencyReport {
  Shape input;
  int warmup = 3;
  std::vector<double> timings_ms;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double images_per_second = 0.0;
  int threads = 1;
  std::string hardware;
};

/// Eval-mode forward timings. Requires warmup >= 3 and repeats >= 10.
LatencyReport bench_latency(const LayerGraph& graph, ParameterSet<float>& params, const Shape& input, int repeats,
                            int warmup = 3, uint64_t seed = 0);

}  // namespace gmbinet
