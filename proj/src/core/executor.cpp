// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/executor.hpp"

#include <algorithm>

#include "gmbinet/errors.hpp"
#include "gmbinet/ops.hpp"

namespace gmbinet {

template <typename T>
std::vector<BasicTensor<T>> execute(const LayerGraph& graph, ParameterSet<T>& params, const Feeds<T>& feeds,
                                    const std::vector<NodeId>& targets, Mode mode, Tape<T>* tape) {
  const auto& nodes = graph.nodes();
  const std::size_t count = nodes.size();
  if (params.size() != graph.params().size()) {
    throw IncompatibleError("parameter set has " + std::to_string(params.size()) + " entries, graph declares " +
                            std::to_string(graph.params().size()));
  }
  std::vector<BasicTensor<T>> values(count);
  std::vector<bool> fed(count, false);
  for (const auto& [id, tensor] : feeds) {
    graph.node(id);
    values[static_cast<std::size_t>(id)] = tensor;
    fed[static_cast<std::size_t>(id)] = true;
  }

  std::vector<bool> needed(count, false);
  std::vector<NodeId> stack(targets.begin(), targets.end());
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    graph.node(id);  // range check
    const auto idx = static_cast<std::size_t>(id);
    if (needed[idx]) continue;
    needed[idx] = true;
    if (fed[idx]) continue;
    for (const NodeId p : nodes[idx].inputs) stack.push_back(p);
  }

  // release intermediates after their last consumer
  std::vector<std::size_t> last_use(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    if (!needed[i] || fed[i]) continue;
    for (const NodeId p : nodes[i].inputs) last_use[static_cast<std::size_t>(p)] = i;
  }
  std::vector<bool> is_target(count, false);
  for (const NodeId t : targets) is_target[static_cast<std::size_t>(t)] = true;

  const BatchNormOptions bn{mode == Mode::train, 0.1, 1e-5};
  for (std::size_t i = 0; i < count; ++i) {
    if (!needed[i] || fed[i]) continue;
    const Node& nd = nodes[i];
    auto in = [&](std::size_t k) -> const BasicTensor<T>& {
      return values[static_cast<std::size_t>(nd.inputs[k])];
    };
    try {
      switch (nd.kind) {
        case NodeKind::input:
          throw ShapeError("graph input was not fed");
        case NodeKind::conv: {
          const BasicTensor<T> none;
          const BasicTensor<T>& bias = nd.params.size() > 1 ? params.at(nd.params[1]) : none;
          values[i] = conv2d(in(0), params.at(nd.params[0]), bias, nd.conv, tape);
          break;
        }
        case NodeKind::batch_norm:
          values[i] = batch_norm(in(0), params.at(nd.params[0]), params.at(nd.params[1]), params.at(nd.params[2]),
                                 params.at(nd.params[3]), bn, tape);
          break;
        case NodeKind::relu: values[i] = relu(in(0), tape); break;
        case NodeKind::sigmoid: values[i] = sigmoid(in(0), tape); break;
        case NodeKind::add: values[i] = add(in(0), in(1), tape); break;
        case NodeKind::mul: values[i] = mul(in(0), in(1), tape); break;
        case NodeKind::upsample: values[i] = bilinear_upsample(in(0), nd.factor, tape); break;
        case NodeKind::slice: values[i] = channel_slice(in(0), nd.begin, nd.count, tape); break;
        case NodeKind::concat: {
          std::vector<BasicTensor<T>> parts;
          parts.reserve(nd.inputs.size());
          for (std::size_t k = 0; k < nd.inputs.size(); ++k) parts.push_back(in(k));
          values[i] = concat(parts, tape);
          break;
        }
        case NodeKind::shuffle: values[i] = channel_shuffle(in(0), nd.groups, tape); break;
        case NodeKind::global_pool: values[i] = global_avg_pool(in(0), tape); break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("node '" + nd.name + "': " + e.what());
    }
    for (const NodeId p : nd.inputs) {
      const auto pi = static_cast<std::size_t>(p);
      if (last_use[pi] == i && !is_target[pi]) values[pi] = BasicTensor<T>();
    }
  }

  std::vector<BasicTensor<T>> out;
  out.reserve(targets.size());
  for (const NodeId t : targets) out.push_back(values[static_cast<std::size_t>(t)]);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> run_outputs(const LayerGraph& graph, ParameterSet<T>& params,
                                                                const BasicTensor<T>& input, Mode mode,
                                                                Tape<T>* tape) {
  std::vector<NodeId> targets;
  for (const auto& [role, id] : graph.outputs()) targets.push_back(id);
  const auto values = execute<T>(graph, params, {{graph.input(), input}}, targets, mode, tape);
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  for (std::size_t i = 0; i < targets.size(); ++i) out.emplace_back(graph.outputs()[i].first, values[i]);
  return out;
}

template std::vector<Tensor> execute(const LayerGraph&, ParameterSet<float>&, const Feeds<float>&,
                                     const std::vector<NodeId>&, Mode, Tape<float>*);
template std::vector<Tensor64> execute(const LayerGraph&, ParameterSet<double>&, const Feeds<double>&,
                                       const std::vector<NodeId>&, Mode, Tape<double>*);
template std::vector<std::pair<std::string, Tensor>> run_outputs(const LayerGraph&, ParameterSet<float>&,
                                                                 const Tensor&, Mode, Tape<float>*);
template std::vector<std::pair<std::string, Tensor64>> run_outputs(const LayerGraph&, ParameterSet<double>&,
                                                                   const Tensor64&, Mode, Tape<double>*);

}  // namespace gmbinet
