// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/gmbinet.h"

#include <cstring>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gmbinet/checkpoint.hpp"
#include "gmbinet/complexity.hpp"
#include "gmbinet/data.hpp"
#include "gmbinet/errors.hpp"
#include "gmbinet/image_io.hpp"
#include "gmbinet/network.hpp"
#include "gmbinet/parallel.hpp"
#include "gmbinet/report.hpp"
#include "gmbinet/trainer.hpp"

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct gmbi_model {
  gmbinet::Model model;
  int64_t train_size = 0;  // from checkpoint metadata, 0 when unknown
};

namespace {

thread_local std::string g_last_error;

struct NullArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

template <typename Fn>
gmbi_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return GMBI_OK;
  } catch (const gmbinet::IncompatibleError& e) {
    g_last_error = e.what();
    return GMBI_ERR_INCOMPATIBLE;
  } catch (const gmbinet::ConfigError& e) {
    g_last_error = e.what();
    return GMBI_ERR_CONFIG;
  } catch (const gmbinet::ShapeError& e) {
    g_last_error = e.what();
    return GMBI_ERR_SHAPE;
  } catch (const gmbinet::IoError& e) {
    g_last_error = e.what();
    return GMBI_ERR_IO;
  } catch (const gmbinet::NumericError& e) {
    g_last_error = e.what();
    return GMBI_ERR_NUMERIC;
  } catch (const NullArgument& e) {
    g_last_error = e.what();
    return GMBI_ERR_INVALID_ARGUMENT;
  } catch (const json::exception& e) {
    g_last_error = std::string("malformed request: ") + e.what();
    return GMBI_ERR_INVALID_ARGUMENT;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return GMBI_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GMBI_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw NullArgument(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_request(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  json j = json::parse(text);
  if (!j.is_object()) throw gmbinet::ConfigError("request must be a JSON object");
  return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& context) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw gmbinet::ConfigError("unknown " + context + " key '" + key + "'");
  }
}

gmbinet::NetworkConfig network_from_json(const json& j, int64_t* num_classes) {
  using namespace gmbinet;
  check_keys(j,
             {"preset", "stages", "input_channels", "width", "skip", "scale_dim", "kernel", "interaction",
              "forward_guidance", "backward_enhancement", "mode", "enhancement_source", "enhancement_order",
              "num_classes"},
             "network");
  const std::string preset = j.value("preset", std::string("gmbinet"));
  NetworkConfig cfg;
  if (preset == "toy") cfg = NetworkConfig::toy();
  else if (preset != "gmbinet") throw ConfigError("unknown network preset '" + preset + "' (expected gmbinet or toy)");
  if (j.contains("stages")) {
    // full description, as stored in checkpoints
    cfg = decode_model_config(j.dump(), nullptr);
  }
  if (j.contains("input_channels")) cfg.input_channels = j.at("input_channels").get<int64_t>();
  if (j.contains("width")) cfg.width = j.at("width").get<double>();
  if (j.contains("skip")) cfg.skip = parse_skip_mode(j.at("skip").get<std::string>());
  if (j.contains("scale_dim")) cfg.block.scale_dim = j.at("scale_dim").get<int64_t>();
  if (j.contains("kernel")) cfg.block.kernel = j.at("kernel").get<int64_t>();
  if (j.contains("interaction")) cfg.block.interaction = parse_interaction(j.at("interaction").get<std::string>());
  if (j.contains("forward_guidance")) cfg.block.forward_guidance = j.at("forward_guidance").get<bool>();
  if (j.contains("backward_enhancement")) cfg.block.backward_enhancement = j.at("backward_enhancement").get<bool>();
  if (j.contains("mode")) cfg.block.mode = parse_scale_mode(j.at("mode").get<std::string>());
  if (j.contains("enhancement_source")) {
    const auto v = j.at("enhancement_source").get<std::string>();
    if (v != "enhanced" && v != "raw") throw ConfigError("enhancement_source must be enhanced or raw");
    cfg.block.enhancement_source = v == "raw" ? EnhancementSource::raw : EnhancementSource::enhanced;
  }
  if (j.contains("enhancement_order")) {
    const auto v = j.at("enhancement_order").get<std::string>();
    if (v != "top_down" && v != "literal") throw ConfigError("enhancement_order must be top_down or literal");
    cfg.block.enhancement_order = v == "literal" ? EnhancementOrder::literal : EnhancementOrder::top_down;
  }
  if (num_classes != nullptr) *num_classes = j.value("num_classes", int64_t{0});
  cfg.validate();
  return cfg;
}

struct DataSets {
  std::vector<gmbinet::Sample> train;
  std::vector<gmbinet::Sample> eval;
};

DataSets load_data(const json& data, int64_t size, uint64_t seed) {
  using namespace gmbinet;
  check_keys(data, {"synthetic", "salt_pepper", "dir", "train_split", "eval_split"}, "data");
  DataSets out;
  if (data.contains("synthetic")) {
    if (data.contains("dir")) throw ConfigError("data takes either 'synthetic' or 'dir', not both");
    const auto count = data.at("synthetic").get<int64_t>();
    out.train = generate_dataset(count, std::max<int64_t>(size, 64), seed, data.value("salt_pepper", 0.05));
    return out;
  }
  if (!data.contains("dir")) throw ConfigError("no dataset given (set data.dir or data.synthetic)");
  const fs::path dir = data.at("dir").get<std::string>();
  out.train = load_dataset(dir, data.value("train_split", std::string()));
  if (data.contains("eval_split")) out.eval = load_dataset(dir, data.at("eval_split").get<std::string>());
  if (out.train.empty()) throw ConfigError("dataset " + dir.string() + " contains no samples");
  return out;
}

json report_json(const gmbinet::MetricReport& r) {
  json j = json::object();
  for (const auto& [k, v] : r.fields()) j[k] = v;
  return j;
}

json cost_json(const gmbinet::CostReport& r, bool breakdown) {
  json j = {{"input", {r.input.n, r.input.c, r.input.h, r.input.w}},
            {"params", r.params},
            {"macs", r.macs},
            {"secondary_ops", r.secondary_ops}};
  if (breakdown) {
    json nodes = json::array();
    for (const auto& n : r.nodes) {
      if (n.macs == 0 && n.params == 0 && n.secondary_ops == 0) continue;
      nodes.push_back({{"id", n.id},
                       {"name", n.name},
                       {"kind", gmbinet::to_string(n.kind)},
                       {"output", {n.output.n, n.output.c, n.output.h, n.output.w}},
                       {"macs", n.macs},
                       {"params", n.params},
                       {"secondary_ops", n.secondary_ops}});
    }
    j["nodes"] = nodes;
  }
  return j;
}

int64_t metadata_train_size(const std::string& metadata) {
  try {
    const auto j = json::parse(metadata);
    return j.value("train_size", int64_t{0});
  } catch (const json::exception&) {
    return 0;
  }
}

}  // namespace

extern "C" {

const char* gmbi_last_error(void) { return g_last_error.c_str(); }
const char* gmbi_version(void) { return "1.0.0"; }

const char* gmbi_status_name(gmbi_status status) {
  switch (status) {
    case GMBI_OK: return "ok";
    case GMBI_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case GMBI_ERR_CONFIG: return "config";
    case GMBI_ERR_SHAPE: return "shape";
    case GMBI_ERR_IO: return "io";
    case GMBI_ERR_INCOMPATIBLE: return "incompatible";
    case GMBI_ERR_NUMERIC: return "numeric";
    case GMBI_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void gmbi_string_free(char* text) { delete[] text; }

void gmbi_set_threads(int threads) { gmbinet::set_thread_count(threads); }

gmbi_status gmbi_model_create(const char* config_json, uint64_t seed, gmbi_model** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    int64_t classes = 0;
    const auto cfg = network_from_json(parse_request(config_json), &classes);
    auto handle = std::make_unique<gmbi_model>();
    handle->model = classes > 0 ? gmbinet::Model::classifier(classes, cfg, seed) : gmbinet::Model::saliency(cfg, seed);
    *out = handle.release();
  });
}

gmbi_status gmbi_model_load(const char* path, gmbi_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto handle = std::make_unique<gmbi_model>();
    handle->model = gmbinet::load_model(path);
    handle->train_size = metadata_train_size(gmbinet::load_checkpoint(path).metadata);
    *out = handle.release();
  });
}

gmbi_status gmbi_model_load_weights(gmbi_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    const auto ckpt = gmbinet::load_checkpoint(path);
    gmbinet::apply_checkpoint(ckpt, model->model.graph, model->model.params);
    model->train_size = metadata_train_size(ckpt.metadata);
  });
}

gmbi_status gmbi_model_save(const gmbi_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    gmbinet::save_model(model->model, path);
  });
}

void gmbi_model_free(gmbi_model* model) { delete model; }

gmbi_status gmbi_model_param_count(const gmbi_model* model, int64_t* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = model->model.graph.parameter_count();
  });
}

gmbi_status gmbi_model_fingerprint(const gmbi_model* model, uint64_t* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = model->model.graph.fingerprint();
  });
}

gmbi_status gmbi_model_config(const gmbi_model* model, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    *out_json = dup_string(gmbinet::encode_model_config(model->model.config, model->model.num_classes));
  });
}

gmbi_status gmbi_model_cost(const gmbi_model* model, int64_t height, int64_t width, int breakdown, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    const auto& g = model->model.graph;
    const auto report = gmbinet::count_graph(g, {1, g.input_channels(), height, width});
    *out_json = dup_string(cost_json(report, breakdown != 0).dump());
  });
}

gmbi_status gmbi_predict(gmbi_model* model, const float* image, int64_t height, int64_t width, int64_t inference_size,
                         float* out) {
  return guarded([&] {
    require(model, "model");
    require(image, "image");
    require(out, "out");
    if (height < 1 || width < 1) throw gmbinet::ShapeError("predict on an empty image");
    const auto n = static_cast<std::size_t>(3 * height * width);
    gmbinet::Tensor x({1, 3, height, width}, std::vector<float>(image, image + n));
    const auto map = gmbinet::predict(x, model->model, {inference_size});
    const auto v = map.data();
    std::copy(v.begin(), v.end(), out);
  });
}

gmbi_status gmbi_predict_png(gmbi_model* model, const char* image_path, const char* output_path,
                             int64_t inference_size) {
  return guarded([&] {
    require(model, "model");
    require(image_path, "image_path");
    require(output_path, "output_path");
    const auto x = gmbinet::image_to_tensor(gmbinet::read_png(image_path));
    gmbinet::export_prediction(gmbinet::predict(x, model->model, {inference_size}), output_path);
  });
}

gmbi_status gmbi_train(gmbi_model* model, const char* request_json, gmbi_progress_fn progress, void* user,
                       char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    const json req = parse_request(request_json);
    check_keys(req,
               {"iterations", "batch", "lr", "lr_floor", "size", "seed", "checkpoint_every", "eval_every", "alpha",
                "side_resolution", "augment", "out_dir", "resume", "data"},
               "train");
    gmbinet::TrainConfig cfg;
    cfg.iterations = req.value("iterations", cfg.iterations);
    cfg.batch = req.value("batch", cfg.batch);
    cfg.lr = req.value("lr", cfg.lr);
    cfg.lr_floor = req.value("lr_floor", cfg.lr_floor);
    cfg.size = req.value("size", cfg.size);
    cfg.seed = req.value("seed", cfg.seed);
    cfg.checkpoint_every = req.value("checkpoint_every", cfg.checkpoint_every);
    cfg.eval_every = req.value("eval_every", cfg.eval_every);
    cfg.augment = req.value("augment", cfg.augment);
    if (req.contains("alpha")) cfg.weights.alpha = req.at("alpha").get<std::vector<double>>();
    const std::string side = req.value("side_resolution", std::string("upsample_maps"));
    if (side == "downsample_labels") cfg.side_resolution = gmbinet::SideResolution::downsample_labels;
    else if (side != "upsample_maps") throw gmbinet::ConfigError("side_resolution must be upsample_maps or downsample_labels");
    cfg.validate();
    if (!req.contains("out_dir")) throw gmbinet::ConfigError("train request needs out_dir");
    const DataSets data = load_data(req.value("data", json::object()), cfg.size, cfg.seed);

    gmbinet::FitOptions options;
    options.out_dir = req.at("out_dir").get<std::string>();
    options.resume_from = req.value("resume", std::string());
    if (progress != nullptr) {
      options.on_row = [&](const gmbinet::LogRow& r) { progress(r.step, r.lr, r.loss, r.mae, r.iou, user); };
    }
    const auto result = gmbinet::fit(model->model, cfg, data.train, data.eval, options);
    model->train_size = cfg.size;
    json out = {{"steps", result.rows.size()},
                {"first_loss", result.first_loss},
                {"final_loss", result.final_loss},
                {"best_iou", result.best_iou},
                {"final_eval", report_json(result.final_eval)},
                {"train_samples", data.train.size()},
                {"eval_samples", data.eval.empty() ? data.train.size() : data.eval.size()},
                {"log", result.log_path.string()},
                {"eval_log", (options.out_dir / "eval_log.csv").string()},
                {"best_checkpoint", result.best_checkpoint.string()},
                {"last_checkpoint", result.last_checkpoint.string()}};
    *out_json = dup_string(out.dump());
  });
}

gmbi_status gmbi_evaluate(gmbi_model* model, const char* request_json, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    if (model->model.num_classes != 0) throw gmbinet::ConfigError("evaluate needs a saliency model");
    const json req = parse_request(request_json);
    check_keys(req, {"data", "size", "threshold", "dump_dir", "seed"}, "eval");
    const int64_t size = req.value("size", model->train_size > 0 ? model->train_size : int64_t{512});
    const double threshold = req.value("threshold", 0.5);
    const DataSets data = load_data(req.value("data", json::object()), size, req.value("seed", uint64_t{0}));
    const auto& samples = data.eval.empty() ? data.train : data.eval;
    if (samples.empty()) throw gmbinet::ConfigError("evaluation dataset is empty");
    const std::string dump = req.value("dump_dir", std::string());
    std::vector<gmbinet::MetricReport> reports;
    std::vector<int64_t> pixels;
    json per_image = json::array();
    for (const auto& s : samples) {
      const auto map = gmbinet::predict(s.image, model->model, {size});
      reports.push_back(gmbinet::segmentation_metrics(map, s.mask, threshold));
      pixels.push_back(s.mask.numel());
      json row = report_json(reports.back());
      row["id"] = s.id;
      per_image.push_back(row);
      if (!dump.empty()) gmbinet::export_prediction(map, fs::path(dump) / (s.id + ".png"));
    }
    json out = {{"size", size},
                {"threshold", threshold},
                {"samples", samples.size()},
                {"aggregate", report_json(gmbinet::merge_reports(reports, pixels))},
                {"per_image", per_image}};
    *out_json = dup_string(out.dump());
  });
}

gmbi_status gmbi_analyze(const char* request_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    const json req = parse_request(request_json);
    check_keys(req, {"k", "c", "h", "w", "n", "families", "network", "input_size", "flops_x2", "breakdown"},
               "analyze");
    gmbinet::CostQuery q;
    q.k = req.value("k", q.k);
    q.c = req.value("c", q.c);
    q.h = req.value("h", q.h);
    q.w = req.value("w", q.w);
    const auto ns = req.value("n", std::vector<int64_t>{1, 2, 4, 8});
    std::vector<gmbinet::CostFamily> families;
    for (const auto& f : req.value("families", std::vector<std::string>{"dsconv", "multibranch", "mi", "gmbi"})) {
      families.push_back(gmbinet::parse_cost_family(f));
    }
    const bool x2 = req.value("flops_x2", false);
    json rows = json::array();
    for (const auto& r : gmbinet::compare_families(q, ns, families)) {
      rows.push_back({{"family", gmbinet::to_string(r.family)},
                      {"n", r.n},
                      {"analytic_macs", r.analytic_macs},
                      {"counted_macs", r.counted_macs},
                      {"params", r.params},
                      {"delta", r.delta}});
    }
    int64_t classes = 0;
    const auto cfg = network_from_json(req.value("network", json::object()), &classes);
    const auto graph = classes > 0 ? gmbinet::build_classifier(classes, cfg) : gmbinet::build_gmbinet(cfg);
    const int64_t size = req.value("input_size", int64_t{512});
    const auto cost = gmbinet::count_graph(graph, {1, cfg.input_channels, size, size});
    json network = cost_json(cost, req.value("breakdown", false));
    network["flops"] = cost.flops(x2);
    network["flop_convention"] = x2 ? "2 x MACs" : "MACs";
    network["config"] = json::parse(gmbinet::encode_model_config(cfg, classes));
    json out = {{"query", {{"k", q.k}, {"c", q.c}, {"h", q.h}, {"w", q.w}}}, {"rows", rows}, {"network", network}};
    *out_json = dup_string(out.dump());
  });
}

gmbi_status gmbi_bench(gmbi_model* model, int64_t size, int64_t batch, int repeats, int warmup, uint64_t seed,
                       char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    if (batch < 1) throw gmbinet::ConfigError("bench batch must be at least 1");
    const auto& g = model->model.graph;
    const gmbinet::Shape input{batch, g.input_channels(), size, size};
    const auto cost = gmbinet::count_graph(g, input);
    const auto r = gmbinet::bench_latency(g, model->model.params, input, repeats, warmup, seed);
    json out = {{"input", {input.n, input.c, input.h, input.w}},
                {"warmup", r.warmup},
                {"repeats", r.timings_ms.size()},
                {"timings_ms", r.timings_ms},
                {"mean_ms", r.mean_ms},
                {"median_ms", r.median_ms},
                {"images_per_second", r.images_per_second},
                {"threads", r.threads},
                {"hardware", r.hardware},
                {"params", g.parameter_count()},
                {"macs", cost.macs}};
    *out_json = dup_string(out.dump());
  });
}

gmbi_status gmbi_synth(const char* request_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    const json req = parse_request(request_json);
    check_keys(req, {"count", "size", "seed", "salt_pepper", "out_dir"}, "synth");
    if (!req.contains("out_dir")) throw gmbinet::ConfigError("synth request needs out_dir");
    const auto samples = gmbinet::generate_dataset(req.value("count", int64_t{8}), req.value("size", int64_t{64}),
                                                   req.value("seed", uint64_t{0}), req.value("salt_pepper", 0.05));
    const fs::path dir = req.at("out_dir").get<std::string>();
    gmbinet::write_dataset(samples, dir);
    json ids = json::array();
    for (const auto& s : samples) ids.push_back(s.id);
    *out_json = dup_string(json{{"out_dir", dir.string()}, {"samples", ids}}.dump());
  });
}

}  // extern "C"
