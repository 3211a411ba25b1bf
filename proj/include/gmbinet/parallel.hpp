// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

namespace gmbinet {

/// Worker count for intra-op parallelism: GMBI_THREADS when set, else 1.
int thread_count();
/// Overrides GMBI_THREADS for this process (0 restores the environment value).
void set_thread_count(int threads);

/// Runs fn(i) for i in [0, count). Each index is handled by exactly one
/// worker, so callers that write disjoint outputs per index stay deterministic.
void parallel_for(int64_t count, const std::function<void(int64_t)>& fn);

}  // namespace gmbinet
