// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmbinet/graph.hpp"
#include "gmbinet/network.hpp"
#include "gmbinet/params.hpp"
#include "gmbinet/tensor.hpp"

namespace gmbinet {

inline constexpr char kCheckpointMagic[8] = {'G', 'M', 'B', 'I', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

/// In-memory image of a checkpoint file.
///
/// Layout (little-endian): magic[8], u32 version, u64 graph fingerprint,
/// u32 metadata length + bytes, u32 tensor count, then per tensor:
/// u32 name length + bytes, u32 rank (4), 4 x i64 dims, f32 values.
struct Checkpoint {
  uint64_t fingerprint = 0;
  std::string metadata;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  const Tensor* find(const std::string& name) const;
};

std::vector<uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::vector<uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter (trainable and running statistics).
Checkpoint make_checkpoint(const LayerGraph& graph, const ParameterSet<float>& params, std::string metadata = {});

/// Copies checkpoint values into params. Throws IncompatibleError when the
/// fingerprint differs from graph's or a parameter is missing or misshapen.
void apply_checkpoint(const Checkpoint& ckpt, const LayerGraph& graph, ParameterSet<float>& params);

/// NetworkConfig (plus class count) as a JSON object string; used as
/// checkpoint metadata so a model can be rebuilt from its file alone.
std::string encode_model_config(const NetworkConfig& cfg, int64_t num_classes);
NetworkConfig decode_model_config(const std::string& json_text, int64_t* num_classes = nullptr);

/// Model checkpoint with the configuration as metadata.
void save_model(const Model& model, const std::filesystem::path& path);
/// Rebuilds the graph from the stored configuration and loads weights.
Model load_model(const std::filesystem::path& path);

}  // namespace gmbinet
