// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gmbinet/graph.hpp"
#include "gmbinet/params.hpp"

namespace gmbinet {

/// train: batch statistics + running-stat updates; eval: running statistics.
enum class Mode { train, eval };

template <typename T>
using Feeds = std::vector<std::pair<NodeId, BasicTensor<T>>>;

/// Evaluates the target nodes. Fed nodes take the given values and their
/// ancestors are not computed, which lets a caller run a sub-graph (for
/// example the decoder from precomputed encoder features).
template <typename T>
std::vector<BasicTensor<T>> execute(const LayerGraph& graph, ParameterSet<T>& params, const Feeds<T>& feeds,
                                    const std::vector<NodeId>& targets, Mode mode, Tape<T>* tape = nullptr);

/// Runs the whole graph from its input and returns every named output.
template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> run_outputs(const LayerGraph& graph, ParameterSet<T>& params,
                                                                const BasicTensor<T>& input, Mode mode,
                                                                Tape<T>* tape = nullptr);

}  // namespace gmbinet
