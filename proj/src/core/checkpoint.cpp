// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "gmbinet/errors.hpp"

namespace gmbinet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }
  void put_string(const std::string& s) {
    put(static_cast<uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void put_raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}
  template <typename V>
  V get() {
    V v;
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  std::string get_string() {
    const auto n = get<uint32_t>();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  const uint8_t* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
    const uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return &tensors[i];
  }
  return nullptr;
}

std::vector<uint8_t> serialize(const Checkpoint& ckpt) {
  if (ckpt.names.size() != ckpt.tensors.size()) throw Error("checkpoint names and tensors differ in length");
  Writer w;
  w.put_raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.put(kCheckpointVersion);
  w.put(ckpt.fingerprint);
  w.put_string(ckpt.metadata);
  w.put(static_cast<uint32_t>(ckpt.tensors.size()));
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    const Tensor& t = ckpt.tensors[i];
    w.put_string(ckpt.names[i]);
    w.put(uint32_t{4});
    const Shape s = t.shape();
    for (const int64_t d : {s.n, s.c, s.h, s.w}) w.put(d);
    const auto v = t.data();
    w.put_raw(v.data(), v.size() * sizeof(float));
  }
  return w.take();
}

Checkpoint deserialize(const std::vector<uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof(kCheckpointMagic)), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw IoError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw IncompatibleError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.fingerprint = r.get<uint64_t>();
  ckpt.metadata = r.get_string();
  const auto count = r.get<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<uint32_t>();
    if (rank != 4) throw IoError("tensor '" + name + "' has rank " + std::to_string(rank) + ", expected 4");
    Shape s{r.get<int64_t>(), r.get<int64_t>(), r.get<int64_t>(), r.get<int64_t>()};
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw IoError("tensor '" + name + "' has a negative dimension");
    std::vector<float> values(static_cast<std::size_t>(s.numel()));
    std::memcpy(values.data(), r.take(values.size() * sizeof(float)), values.size() * sizeof(float));
    ckpt.names.push_back(std::move(name));
    ckpt.tensors.emplace_back(s, std::move(values));
  }
  if (!r.done()) throw IoError("trailing bytes after the last checkpoint tensor");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const IncompatibleError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const LayerGraph& graph, const ParameterSet<float>& params, std::string metadata) {
  Checkpoint ckpt;
  ckpt.fingerprint = graph.fingerprint();
  ckpt.metadata = std::move(metadata);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.names.push_back(params.name(i));
    ckpt.tensors.push_back(params.at(i).clone());
  }
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, const LayerGraph& graph, ParameterSet<float>& params) {
  if (ckpt.fingerprint != graph.fingerprint()) {
    throw IncompatibleError("checkpoint graph fingerprint " + std::to_string(ckpt.fingerprint) +
                            " does not match the built graph (" + std::to_string(graph.fingerprint()) + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* src = ckpt.find(params.name(i));
    if (src == nullptr) throw IncompatibleError("checkpoint lacks parameter '" + params.name(i) + "'");
    Tensor& dst = params.at(i);
    if (src->shape() != dst.shape()) {
      throw IncompatibleError("parameter '" + params.name(i) + "' has shape " + src->shape().str() +
                              " in the checkpoint but " + dst.shape().str() + " in the graph");
    }
    const auto from = src->data();
    auto to = dst.mutable_data();
    std::copy(from.begin(), from.end(), to.begin());
  }
}

std::string encode_model_config(const NetworkConfig& cfg, int64_t num_classes) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& s : cfg.stages) {
    stages.push_back({{"kind", s.kind == StageKind::stem ? "stem" : "gmbi"}, {"repeats", s.repeats},
                      {"channels", s.channels}});
  }
  j["stages"] = stages;
  j["input_channels"] = cfg.input_channels;
  j["width"] = cfg.width;
  j["skip"] = to_string(cfg.skip);
  j["scale_dim"] = cfg.block.scale_dim;
  j["kernel"] = cfg.block.kernel;
  j["interaction"] = to_string(cfg.block.interaction);
  j["forward_guidance"] = cfg.block.forward_guidance;
  j["backward_enhancement"] = cfg.block.backward_enhancement;
  j["mode"] = to_string(cfg.block.mode);
  j["enhancement_source"] = cfg.block.enhancement_source == EnhancementSource::enhanced ? "enhanced" : "raw";
  j["enhancement_order"] = cfg.block.enhancement_order == EnhancementOrder::top_down ? "top_down" : "literal";
  j["num_classes"] = num_classes;
  return j.dump();
}

NetworkConfig decode_model_config(const std::string& json_text, int64_t* num_classes) {
  NetworkConfig cfg;
  try {
    const auto j = nlohmann::json::parse(json_text);
    cfg.stages.clear();
    int index = 1;
    for (const auto& s : j.at("stages")) {
      StageConfig st;
      st.index = index++;
      const auto kind = s.at("kind").get<std::string>();
      if (kind != "stem" && kind != "gmbi") throw ConfigError("unknown stage kind '" + kind + "'");
      st.kind = kind == "stem" ? StageKind::stem : StageKind::gmbi;
      st.repeats = s.at("repeats").get<int64_t>();
      st.channels = s.at("channels").get<int64_t>();
      cfg.stages.push_back(st);
    }
    cfg.input_channels = j.at("input_channels").get<int64_t>();
    cfg.width = j.at("width").get<double>();
    cfg.skip = parse_skip_mode(j.at("skip").get<std::string>());
    cfg.block.scale_dim = j.at("scale_dim").get<int64_t>();
    cfg.block.kernel = j.at("kernel").get<int64_t>();
    cfg.block.interaction = parse_interaction(j.at("interaction").get<std::string>());
    cfg.block.forward_guidance = j.at("forward_guidance").get<bool>();
    cfg.block.backward_enhancement = j.at("backward_enhancement").get<bool>();
    cfg.block.mode = parse_scale_mode(j.at("mode").get<std::string>());
    cfg.block.enhancement_source =
        j.at("enhancement_source").get<std::string>() == "raw" ? EnhancementSource::raw : EnhancementSource::enhanced;
    cfg.block.enhancement_order = j.at("enhancement_order").get<std::string>() == "literal"
                                      ? EnhancementOrder::literal
                                      : EnhancementOrder::top_down;
    if (num_classes != nullptr) *num_classes = j.value("num_classes", int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed model configuration: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  save_checkpoint(make_checkpoint(model.graph, model.params, encode_model_config(model.config, model.num_classes)),
                  path);
}

Model load_model(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  int64_t classes = 0;
  const NetworkConfig cfg = decode_model_config(ckpt.metadata, &classes);
  Model model = classes > 0 ? Model::classifier(classes, cfg, 0) : Model::saliency(cfg, 0);
  apply_checkpoint(ckpt, model.graph, model.params);
  return model;
}

}  // namespace gmbinet
