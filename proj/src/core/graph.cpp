// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/graph.hpp"

#include <sstream>
#include <unordered_set>

#include "gmbinet/errors.hpp"

namespace gmbinet {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::input: return "input";
    case NodeKind::conv: return "conv";
    case NodeKind::batch_norm: return "batch_norm";
    case NodeKind::relu: return "relu";
    case NodeKind::sigmoid: return "sigmoid";
    case NodeKind::add: return "add";
    case NodeKind::mul: return "mul";
    case NodeKind::upsample: return "upsample";
    case NodeKind::slice: return "slice";
    case NodeKind::concat: return "concat";
    case NodeKind::shuffle: return "shuffle";
    case NodeKind::global_pool: return "global_pool";
  }
  return "unknown";
}

uint64_t fnv1a64(std::string_view text) {
  uint64_t hash = 14695981039346656037ull;
  for (const char ch : text) {
    hash ^= static_cast<unsigned char>(ch);
    hash *= 1099511628211ull;
  }
  return hash;
}

LayerGraph::LayerGraph(int64_t input_channels) {
  if (input_channels <= 0) throw ConfigError("graph input needs a positive channel count");
  Node in;
  in.kind = NodeKind::input;
  in.name = "input";
  in.channels = input_channels;
  nodes_.push_back(in);
}

void LayerGraph::check_id(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw ConfigError("unknown graph node id " + std::to_string(id));
  }
}

const Node& LayerGraph::node(NodeId id) const {
  check_id(id);
  return nodes_[static_cast<std::size_t>(id)];
}

NodeId LayerGraph::push(Node node) {
  for (const NodeId in : node.inputs) check_id(in);
  if (node.name.empty()) node.name = std::string(to_string(node.kind)) + "_" + std::to_string(nodes_.size());
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

std::size_t LayerGraph::add_param(ParamSpec spec) {
  for (const auto& p : params_) {
    if (p.name == spec.name) throw ConfigError("duplicate parameter name '" + spec.name + "'");
  }
  params_.push_back(std::move(spec));
  return params_.size() - 1;
}

NodeId LayerGraph::conv(NodeId x, const ConvSpec& spec, const std::string& name) {
  spec.validate();
  if (channels(x) != spec.in_channels) {
    throw ShapeError("node '" + name + "': input has " + std::to_string(channels(x)) + " channels, " + spec.str() +
                     " expects " + std::to_string(spec.in_channels));
  }
  Node n;
  n.kind = NodeKind::conv;
  n.name = name;
  n.inputs = {x};
  n.conv = spec;
  n.channels = spec.out_channels;
  const int64_t fan_in = spec.in_per_group() * spec.kernel * spec.kernel;
  n.params.push_back(add_param({name + ".weight", spec.weight_shape(), ParamInit::kaiming_uniform, fan_in, true}));
  if (spec.bias) {
    n.params.push_back(add_param({name + ".bias", Shape{1, spec.out_channels, 1, 1}, ParamInit::zeros, fan_in, true}));
  }
  return push(std::move(n));
}

NodeId LayerGraph::batch_norm(NodeId x, const std::string& name) {
  Node n;
  n.kind = NodeKind::batch_norm;
  n.name = name;
  n.inputs = {x};
  n.channels = channels(x);
  const Shape ps{1, n.channels, 1, 1};
  n.params.push_back(add_param({name + ".gamma", ps, ParamInit::ones, 1, true}));
  n.params.push_back(add_param({name + ".beta", ps, ParamInit::zeros, 1, true}));
  n.params.push_back(add_param({name + ".running_mean", ps, ParamInit::zeros, 1, false}));
  n.params.push_back(add_param({name + ".running_var", ps, ParamInit::ones, 1, false}));
  return push(std::move(n));
}

NodeId LayerGraph::relu(NodeId x) {
  Node n;
  n.kind = NodeKind::relu;
  n.inputs = {x};
  n.channels = channels(x);
  return push(std::move(n));
}

NodeId LayerGraph::sigmoid(NodeId x) {
  Node n;
  n.kind = NodeKind::sigmoid;
  n.inputs = {x};
  n.channels = channels(x);
  return push(std::move(n));
}

NodeId LayerGraph::add(NodeId a, NodeId b) {
  if (channels(a) != channels(b)) {
    throw ShapeError("add: channel mismatch " + std::to_string(channels(a)) + " vs " + std::to_string(channels(b)));
  }
  Node n;
  n.kind = NodeKind::add;
  n.inputs = {a, b};
  n.channels = channels(a);
  return push(std::move(n));
}

NodeId LayerGraph::mul(NodeId a, NodeId b) {
  if (channels(a) != channels(b)) {
    throw ShapeError("mul: channel mismatch " + std::to_string(channels(a)) + " vs " + std::to_string(channels(b)));
  }
  Node n;
  n.kind = NodeKind::mul;
  n.inputs = {a, b};
  n.channels = channels(a);
  return push(std::move(n));
}

NodeId LayerGraph::upsample(NodeId x, int64_t factor) {
  if (factor < 1) throw ConfigError("upsample factor must be >= 1");
  Node n;
  n.kind = NodeKind::upsample;
  n.inputs = {x};
  n.factor = factor;
  n.channels = channels(x);
  return push(std::move(n));
}

NodeId LayerGraph::slice(NodeId x, int64_t begin, int64_t count) {
  if (begin < 0 || count <= 0 || begin + count > channels(x)) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(begin + count) + ") exceeds " +
                     std::to_string(channels(x)) + " channels");
  }
  Node n;
  n.kind = NodeKind::slice;
  n.inputs = {x};
  n.begin = begin;
  n.count = count;
  n.channels = count;
  return push(std::move(n));
}

NodeId LayerGraph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ConfigError("concat needs at least one input");
  Node n;
  n.kind = NodeKind::concat;
  n.inputs = parts;
  for (const NodeId p : parts) n.channels += channels(p);
  return push(std::move(n));
}

NodeId LayerGraph::shuffle(NodeId x, int64_t groups) {
  if (groups <= 0 || channels(x) % groups != 0) {
    throw ShapeError("shuffle: " + std::to_string(channels(x)) + " channels not divisible by " +
                     std::to_string(groups));
  }
  Node n;
  n.kind = NodeKind::shuffle;
  n.inputs = {x};
  n.groups = groups;
  n.channels = channels(x);
  return push(std::move(n));
}

NodeId LayerGraph::global_pool(NodeId x) {
  Node n;
  n.kind = NodeKind::global_pool;
  n.inputs = {x};
  n.channels = channels(x);
  return push(std::move(n));
}

void LayerGraph::set_output(const std::string& role, NodeId id) {
  check_id(id);
  for (auto& [r, n] : outputs_) {
    if (r == role) {
      n = id;
      return;
    }
  }
  outputs_.emplace_back(role, id);
}

bool LayerGraph::has_output(const std::string& role) const {
  for (const auto& [r, n] : outputs_) {
    if (r == role) return true;
  }
  return false;
}

NodeId LayerGraph::output(const std::string& role) const {
  for (const auto& [r, n] : outputs_) {
    if (r == role) return n;
  }
  throw ConfigError("graph has no output named '" + role + "'");
}

std::vector<Shape> LayerGraph::infer_shapes(const Shape& input) const {
  if (input.c != input_channels()) {
    throw ShapeError("graph input expects " + std::to_string(input_channels()) + " channels, got " + input.str());
  }
  if (input.n <= 0 || input.h <= 0 || input.w <= 0) throw ShapeError("graph input shape is empty: " + input.str());
  std::vector<Shape> shapes(nodes_.size());
  shapes[0] = input;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const Node& nd = nodes_[i];
    const Shape a = shapes[static_cast<std::size_t>(nd.inputs.front())];
    auto fail = [&](const std::string& why) {
      throw ShapeError("cannot infer shape of node '" + nd.name + "' (" + to_string(nd.kind) + "): " + why);
    };
    switch (nd.kind) {
      case NodeKind::input:
        fail("second input node");
        break;
      case NodeKind::conv: {
        const int64_t oh = nd.conv.output_extent(a.h);
        const int64_t ow = nd.conv.output_extent(a.w);
        if (oh <= 0 || ow <= 0) fail("input " + a.str() + " too small for " + nd.conv.str());
        shapes[i] = Shape{a.n, nd.conv.out_channels, oh, ow};
        break;
      }
      case NodeKind::batch_norm:
      case NodeKind::relu:
      case NodeKind::sigmoid:
      case NodeKind::shuffle:
        shapes[i] = a;
        break;
      case NodeKind::add:
      case NodeKind::mul: {
        const Shape b = shapes[static_cast<std::size_t>(nd.inputs[1])];
        if (a != b) fail("operand shapes differ " + a.str() + " vs " + b.str());
        shapes[i] = a;
        break;
      }
      case NodeKind::upsample:
        shapes[i] = Shape{a.n, a.c, a.h * nd.factor, a.w * nd.factor};
        break;
      case NodeKind::slice:
        shapes[i] = Shape{a.n, nd.count, a.h, a.w};
        break;
      case NodeKind::concat: {
        int64_t c = 0;
        for (const NodeId p : nd.inputs) {
          const Shape s = shapes[static_cast<std::size_t>(p)];
          if (s.n != a.n || s.h != a.h || s.w != a.w) fail("part " + s.str() + " does not match " + a.str());
          c += s.c;
        }
        shapes[i] = Shape{a.n, c, a.h, a.w};
        break;
      }
      case NodeKind::global_pool:
        shapes[i] = Shape{a.n, a.c, 1, 1};
        break;
    }
  }
  return shapes;
}

int64_t LayerGraph::parameter_count() const {
  int64_t total = 0;
  for (const auto& p : params_) {
    if (p.trainable) total += p.shape.numel();
  }
  return total;
}

std::string LayerGraph::describe() const {
  std::ostringstream os;
  os << "gmbinet-graph v1\n";
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& nd = nodes_[i];
    os << i << ' ' << to_string(nd.kind) << ' ' << nd.name << " ch=" << nd.channels << " in=";
    for (const NodeId p : nd.inputs) os << p << ',';
    switch (nd.kind) {
      case NodeKind::conv: os << ' ' << nd.conv.str(); break;
      case NodeKind::upsample: os << " x" << nd.factor; break;
      case NodeKind::slice: os << " [" << nd.begin << '+' << nd.count << ']'; break;
      case NodeKind::shuffle: os << " g=" << nd.groups; break;
      default: break;
    }
    for (const std::size_t p : nd.params) os << ' ' << params_[p].name << params_[p].shape.str();
    os << '\n';
  }
  for (const auto& [role, id] : outputs_) os << "out " << role << ' ' << id << '\n';
  return os.str();
}

uint64_t LayerGraph::fingerprint() const { return fnv1a64(describe()); }

}  // namespace gmbinet
