// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gmbinet/ops.hpp"
#include "gmbinet/tensor.hpp"

namespace gmbinet {

using NodeId = int;

enum class NodeKind {
  input,
  conv,
  batch_norm,
  relu,
  sigmoid,
  add,
  mul,
  upsample,
  slice,
  concat,
  shuffle,
  global_pool,
};

const char* to_string(NodeKind kind);

enum class ParamInit { kaiming_uniform, zeros, ones };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::zeros;
  int64_t fan_in = 1;
  bool trainable = true;
};

struct Node {
  NodeKind kind = NodeKind::input;
  std::string name;
  std::vector<NodeId> inputs;
  ConvSpec conv;          // conv
  int64_t factor = 1;     // upsample
  int64_t begin = 0;      // slice
  int64_t count = 0;      // slice
  int64_t groups = 1;     // shuffle
  int64_t channels = 0;   // output channel count, known at build time
  std::vector<std::size_t> params;  // conv: weight[, bias]; batch_norm: gamma, beta, mean, var
};

/// Ordered, acyclic layer graph with a single image input.
///
/// Nodes are appended in topological order by the builder methods, so the
/// node index order is a valid execution order. Named outputs mark the
/// primary result and any side outputs.
class LayerGraph {
 public:
  explicit LayerGraph(int64_t input_channels = 3);

  NodeId input() const { return 0; }
  int64_t input_channels() const { return nodes_.front().channels; }

  NodeId conv(NodeId x, const ConvSpec& spec, const std::string& name);
  NodeId batch_norm(NodeId x, const std::string& name);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId upsample(NodeId x, int64_t factor);
  NodeId slice(NodeId x, int64_t begin, int64_t count);
  NodeId concat(const std::vector<NodeId>& parts);
  NodeId shuffle(NodeId x, int64_t groups);
  NodeId global_pool(NodeId x);

  void set_output(const std::string& role, NodeId id);
  bool has_output(const std::string& role) const;
  NodeId output(const std::string& role) const;
  const std::vector<std::pair<std::string, NodeId>>& outputs() const { return outputs_; }

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId id) const;
  const std::vector<ParamSpec>& params() const { return params_; }
  int64_t channels(NodeId id) const { return node(id).channels; }

  /// Output shape of every node for the given input shape. Throws ShapeError
  /// naming the first node whose shape cannot be inferred.
  std::vector<Shape> infer_shapes(const Shape& input) const;

  /// Total number of trainable parameter values.
  int64_t parameter_count() const;

  /// Canonical structural description; identical graphs give identical text.
  std::string describe() const;
  /// 64-bit FNV-1a hash of describe().
  uint64_t fingerprint() const;

 private:
  NodeId push(Node node);
  std::size_t add_param(ParamSpec spec);
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<ParamSpec> params_;
  std::vector<std::pair<std::string, NodeId>> outputs_;
};

uint64_t fnv1a64(std::string_view text);

}  // namespace gmbinet
