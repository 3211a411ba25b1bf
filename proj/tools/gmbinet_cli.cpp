// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Talks to the library only through the C API.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmbinet/gmbinet.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIncompatible = 3;

struct CommandError {
  int code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& message) { throw CommandError{kExitUsage, message}; }

int exit_code_for(gmbi_status s) {
  switch (s) {
    case GMBI_OK: return kExitOk;
    case GMBI_ERR_INVALID_ARGUMENT:
    case GMBI_ERR_CONFIG:
    case GMBI_ERR_SHAPE:
    case GMBI_ERR_IO: return kExitUsage;
    case GMBI_ERR_INCOMPATIBLE: return kExitIncompatible;
    default: return kExitFailure;
  }
}

void check(gmbi_status s) {
  if (s != GMBI_OK) throw CommandError{exit_code_for(s), std::string(gmbi_status_name(s)) + ": " + gmbi_last_error()};
}

// Owns a string returned by the C API.
std::string take(char* text) {
  std::string out = text != nullptr ? text : "";
  gmbi_string_free(text);
  return out;
}

struct ModelDeleter {
  void operator()(gmbi_model* m) const { gmbi_model_free(m); }
};
using ModelPtr = std::unique_ptr<gmbi_model, ModelDeleter>;

// ---------------------------------------------------------------------------
// Settings: every option has a key usable in config files and as --key (with
// dashes). Resolution order is defaults < config file < flags.

enum class Kind { integer, real, boolean, text, int_list, real_list, text_list };

struct OptionDef {
  std::string key;
  Kind kind;
  std::string help;
  std::string dest;  // "req.<field>", "net.<field>", "cli.<field>", "data.<field>"
  bool flag = false;  // boolean switch; presence stores flag_value
  bool flag_value = true;
};

using Settings = std::map<std::string, std::string>;

std::string dashed(std::string key) {
  for (auto& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

std::string normalized(std::string key) {
  for (auto& c : key) {
    if (c == '-') c = '_';
  }
  return key;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

json convert(const OptionDef& def, const std::string& value) {
  try {
    std::size_t used = 0;
    switch (def.kind) {
      case Kind::integer: {
        const long long v = std::stoll(value, &used);
        if (used != value.size()) break;
        return v;
      }
      case Kind::real: {
        const double v = std::stod(value, &used);
        if (used != value.size()) break;
        return v;
      }
      case Kind::boolean:
        if (value == "true" || value == "1" || value == "yes") return true;
        if (value == "false" || value == "0" || value == "no") return false;
        break;
      case Kind::text: return value;
      case Kind::int_list: {
        json arr = json::array();
        for (const auto& item : split_list(value)) arr.push_back(std::stoll(item));
        return arr;
      }
      case Kind::real_list: {
        json arr = json::array();
        for (const auto& item : split_list(value)) arr.push_back(std::stod(item));
        return arr;
      }
      case Kind::text_list: {
        json arr = json::array();
        for (const auto& item : split_list(value)) arr.push_back(item);
        return arr;
      }
    }
  } catch (const std::exception&) {
  }
  usage_error("invalid value '" + value + "' for key '" + def.key + "'");
}

std::vector<OptionDef> network_options() {
  return {
      {"preset", Kind::text, "network preset: gmbinet or toy", "net.preset"},
      {"scale_dim", Kind::integer, "scale dimension n of every GMBI block", "net.scale_dim"},
      {"kernel", Kind::integer, "depthwise kernel size", "net.kernel"},
      {"interaction", Kind::text, "ewms, sum, mul, concat or none", "net.interaction"},
      {"mode", Kind::text, "group, branch or single", "net.mode"},
      {"no_fg", Kind::boolean, "disable forward guidance", "net.forward_guidance", true, false},
      {"no_be", Kind::boolean, "disable backward enhancement", "net.backward_enhancement", true, false},
      {"be_source", Kind::text, "backward-enhancement guide: enhanced or raw", "net.enhancement_source"},
      {"be_order", Kind::text, "backward-enhancement order: top_down or literal", "net.enhancement_order"},
      {"skip", Kind::text, "decoder skip: sum, concat or none", "net.skip"},
      {"width", Kind::real, "channel width multiplier", "net.width"},
      {"num_classes", Kind::integer, "build the classifier with this many classes", "net.num_classes"},
  };
}

std::vector<OptionDef> data_options() {
  return {
      {"synthetic", Kind::integer, "use N generated samples instead of a dataset directory", "data.synthetic"},
      {"salt_pepper", Kind::real, "salt-and-pepper probability of generated samples", "data.salt_pepper"},
      {"data", Kind::text, "dataset directory with images/ and masks/", "data.dir"},
      {"train_split", Kind::text, "split.txt section used for training", "data.train_split"},
      {"eval_split", Kind::text, "split.txt section used for evaluation", "data.eval_split"},
  };
}

Settings read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) usage_error("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  Settings out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      usage_error("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    for (const auto& [k, v] : j.items()) {
      if (v.is_string()) out[normalized(k)] = v.get<std::string>();
      else if (v.is_array()) {
        std::string joined;
        for (const auto& item : v) joined += (joined.empty() ? "" : ",") + (item.is_string() ? item.get<std::string>() : item.dump());
        out[normalized(k)] = joined;
      } else out[normalized(k)] = v.dump();
    }
    return out;
  }
  std::stringstream ss(text);
  int line_no = 0;
  for (std::string line; std::getline(ss, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) usage_error(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto s0 = s.find_first_not_of(" \t\r");
      if (s0 == std::string::npos) return std::string();
      return s.substr(s0, s.find_last_not_of(" \t\r") - s0 + 1);
    };
    out[normalized(trim(line.substr(0, eq)))] = trim(line.substr(eq + 1));
  }
  return out;
}

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::vector<OptionDef> defs;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, bool> switch_values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;

  void declare(std::vector<OptionDef> more) {
    for (auto& d : more) {
      if (d.flag) {
        options[d.key] = app->add_flag("--" + dashed(d.key), switch_values[d.key], d.help);
      } else {
        options[d.key] = app->add_option("--" + dashed(d.key), flag_values[d.key], d.help);
      }
      defs.push_back(std::move(d));
    }
  }

  const OptionDef* find(const std::string& key) const {
    for (const auto& d : defs) {
      if (d.key == key) return &d;
    }
    return nullptr;
  }

  /// Merged settings (file < flags); defaults are applied later per command.
  Settings explicit_settings() const {
    Settings s;
    if (!config_path.empty()) {
      for (const auto& [k, v] : read_config_file(config_path)) {
        if (k == "config") usage_error("config files cannot include other config files");
        if (find(k) == nullptr) usage_error("unknown config key '" + k + "' for command " + name);
        s[k] = v;
      }
    }
    for (const auto& d : defs) {
      const auto* opt = options.at(d.key);
      if (opt->count() == 0) continue;
      s[d.key] = d.flag ? "true" : flag_values.at(d.key);
    }
    return s;
  }
};

struct Resolved {
  Settings settings;  // every key that has a value, after precedence
  json req = json::object();
  json net = json::object();
  json data = json::object();
  json cli = json::object();
};

Resolved resolve(const Command& cmd, const Settings& defaults) {
  Resolved r;
  r.settings = defaults;
  for (const auto& [k, v] : cmd.explicit_settings()) r.settings[k] = v;
  for (const auto& [k, v] : r.settings) {
    const OptionDef* d = cmd.find(k);
    if (d == nullptr) usage_error("unknown key '" + k + "'");
    json value = convert(*d, v);
    if (d->flag) {
      if (!value.get<bool>()) continue;  // switch not set
      value = d->flag_value;
    }
    const auto dot = d->dest.find('.');
    const std::string scope = d->dest.substr(0, dot);
    const std::string field = d->dest.substr(dot + 1);
    json& target = scope == "req" ? r.req : scope == "net" ? r.net : scope == "data" ? r.data : r.cli;
    target[field] = value;
  }
  return r;
}

// ---------------------------------------------------------------------------

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  uint64_t seed = 0;
  json artifacts = json::array();
  std::string hardware;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::string started_at;
  fs::path path;
};

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hardware_line() {
  std::string model = "unknown-cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.rfind("model name", 0) == 0) {
      model = line.substr(line.find(':') + 2);
      break;
    }
  }
  const char* threads = std::getenv("GMBI_THREADS");
  return model + "; GMBI_THREADS=" + (threads != nullptr ? threads : "unset");
}

void write_manifest(const Manifest& m, int exit_code, const std::string& error) {
  if (m.path.empty()) return;
  json j = {{"command", m.command},
            {"argv", m.argv},
            {"config", m.config},
            {"seed", m.seed},
            {"artifacts", m.artifacts},
            {"hardware", m.hardware},
            {"library_version", gmbi_version()},
            {"started_at", m.started_at},
            {"wall_time_ms",
             std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - m.start).count()},
            {"exit_code", exit_code}};
  if (!error.empty()) j["error"] = error;
  std::error_code ec;
  if (m.path.has_parent_path()) fs::create_directories(m.path.parent_path(), ec);
  std::ofstream out(m.path);
  out << j.dump(2) << "\n";
}

void write_file(const fs::path& path, const std::string& content, Manifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw CommandError{kExitUsage, "cannot write " + path.string()};
  out << content;
  manifest.artifacts.push_back(path.string());
}

std::string key_values(const json& flat) {
  std::ostringstream os;
  os.precision(10);
  for (const auto& [k, v] : flat.items()) os << k << '=' << v.get<double>() << '\n';
  return os.str();
}

json settings_json(const Settings& s) {
  json j = json::object();
  for (const auto& [k, v] : s) j[k] = v;
  return j;
}

ModelPtr open_model(const Resolved& r, uint64_t seed) {
  gmbi_model* raw = nullptr;
  const std::string ckpt = r.cli.value("checkpoint", std::string());
  if (ckpt.empty()) {
    check(gmbi_model_create(r.net.dump().c_str(), seed, &raw));
    return ModelPtr(raw);
  }
  if (r.net.empty()) {
    check(gmbi_model_load(ckpt.c_str(), &raw));
    return ModelPtr(raw);
  }
  // explicit architecture flags: build it, then demand a matching checkpoint
  check(gmbi_model_create(r.net.dump().c_str(), seed, &raw));
  ModelPtr model(raw);
  check(gmbi_model_load_weights(model.get(), ckpt.c_str()));
  return model;
}

// ---------------------------------------------------------------------------

void progress_printer(int64_t step, double lr, double loss, double mae, double iou, void* user) {
  const auto every = *static_cast<int64_t*>(user);
  if (every > 0 && (step == 1 || step % every == 0)) {
    std::fprintf(stderr, "step %lld  lr %.3e  loss %.5f  mae %.4f  iou %.4f\n", static_cast<long long>(step), lr, loss,
                 mae, iou);
  }
}

void run_train(const Command& cmd, Manifest& manifest) {
  Settings explicit_values = cmd.explicit_settings();
  std::string profile = explicit_values.count("profile") ? explicit_values["profile"] : "auto";
  if (profile == "auto") profile = explicit_values.count("synthetic") ? "desk" : "paper";
  Settings defaults{{"seed", "0"}, {"out", "runs/train"}, {"log_every", "100"}, {"profile", profile}};
  if (profile == "desk") {
    defaults.insert({{"iters", "3000"}, {"batch", "4"}, {"size", "64"}, {"eval_every", "500"}, {"checkpoint_every", "500"}});
  } else if (profile == "paper") {
    defaults.insert({{"iters", "50000"}, {"batch", "32"}, {"size", "512"}, {"eval_every", "1000"}, {"checkpoint_every", "1000"}});
  } else {
    usage_error("unknown profile '" + profile + "' (expected auto, desk or paper)");
  }
  Resolved r = resolve(cmd, defaults);
  if (!r.data.contains("synthetic") && !r.data.contains("dir")) {
    usage_error("train needs a dataset: pass --data DIR or --synthetic N");
  }
  const uint64_t seed = r.cli.at("seed").get<uint64_t>();
  const fs::path out = r.cli.at("out").get<std::string>();
  manifest.path = out / "manifest.json";
  manifest.seed = seed;
  manifest.config = settings_json(r.settings);
  if (r.cli.contains("threads")) gmbi_set_threads(r.cli.at("threads").get<int>());

  ModelPtr model = open_model(r, seed);
  json req = r.req;
  req["seed"] = seed;
  req["out_dir"] = out.string();
  req["data"] = r.data;
  if (r.cli.contains("resume")) req["resume"] = r.cli.at("resume");
  manifest.config["request"] = req;
  int64_t log_every = r.cli.at("log_every").get<int64_t>();
  char* result = nullptr;
  check(gmbi_train(model.get(), req.dump().c_str(), progress_printer, &log_every, &result));
  const json res = json::parse(take(result));
  for (const char* key : {"log", "eval_log", "best_checkpoint", "last_checkpoint"}) manifest.artifacts.push_back(res.at(key));
  write_file(out / "train_summary.json", res.dump(2) + "\n", manifest);
  std::printf("trained %lld steps: loss %.5f -> %.5f, final eval iou %.4f\n", res.at("steps").get<long long>(),
              res.at("first_loss").get<double>(), res.at("final_loss").get<double>(),
              res.at("final_eval").at("iou").get<double>());
  std::printf("checkpoints: %s, %s\n", res.at("best_checkpoint").get<std::string>().c_str(),
              res.at("last_checkpoint").get<std::string>().c_str());
}

void run_eval(const Command& cmd, Manifest& manifest) {
  Resolved r = resolve(cmd, {{"seed", "0"}, {"out", "runs/eval"}, {"threshold", "0.5"}});
  if (!r.cli.contains("checkpoint")) usage_error("eval needs --checkpoint");
  if (!r.data.contains("synthetic") && !r.data.contains("dir")) usage_error("eval needs --data DIR or --synthetic N");
  const uint64_t seed = r.cli.at("seed").get<uint64_t>();
  const fs::path out = r.cli.at("out").get<std::string>();
  manifest.path = out / "manifest.json";
  manifest.seed = seed;
  manifest.config = settings_json(r.settings);
  if (r.cli.contains("threads")) gmbi_set_threads(r.cli.at("threads").get<int>());

  ModelPtr model = open_model(r, seed);
  json req = r.req;
  req["seed"] = seed;
  req["data"] = r.data;
  if (r.cli.contains("dump_pred")) req["dump_dir"] = r.cli.at("dump_pred");
  char* result = nullptr;
  check(gmbi_evaluate(model.get(), req.dump().c_str(), &result));
  const json res = json::parse(take(result));
  write_file(out / "metrics.txt", key_values(res.at("aggregate")), manifest);
  write_file(out / "metrics.json", res.at("aggregate").dump(2) + "\n", manifest);
  write_file(out / "per_image.json", res.at("per_image").dump(2) + "\n", manifest);
  if (req.contains("dump_dir")) manifest.artifacts.push_back(req.at("dump_dir"));
  std::printf("%s", key_values(res.at("aggregate")).c_str());
}

void run_predict(const Command& cmd, Manifest& manifest) {
  Resolved r = resolve(cmd, {{"seed", "0"}, {"size", "0"}});
  if (!r.cli.contains("checkpoint")) usage_error("predict needs --checkpoint");
  if (!r.cli.contains("input") || !r.cli.contains("output")) usage_error("predict needs --input and --output");
  const fs::path input = r.cli.at("input").get<std::string>();
  const fs::path output = r.cli.at("output").get<std::string>();
  manifest.seed = r.cli.at("seed").get<uint64_t>();
  manifest.config = settings_json(r.settings);
  if (r.cli.contains("threads")) gmbi_set_threads(r.cli.at("threads").get<int>());
  ModelPtr model = open_model(r, manifest.seed);
  int64_t size = r.req.at("size").get<int64_t>();
  if (size <= 0) size = 512;

  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(input)) {
    manifest.path = output / "manifest.json";
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) usage_error("no PNG files in " + input.string());
    for (const auto& f : files) jobs.emplace_back(f, output / f.filename());
  } else {
    manifest.path = fs::path(output.string() + ".manifest.json");
    jobs.emplace_back(input, output);
  }
  for (const auto& [in, outp] : jobs) {
    if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
    check(gmbi_predict_png(model.get(), in.c_str(), outp.c_str(), size));
    manifest.artifacts.push_back(outp.string());
  }
  std::printf("wrote %zu prediction(s)\n", jobs.size());
}

void run_analyze(const Command& cmd, Manifest& manifest) {
  Resolved r = resolve(cmd, {{"k", "3"},
                             {"c", "32"},
                             {"h", "128"},
                             {"w", "128"},
                             {"n", "1,2,4,8"},
                             {"families", "dsconv,multibranch,mi,gmbi"},
                             {"input_size", "512"},
                             {"out", "runs/analyze"},
                             {"seed", "0"}});
  const fs::path out = r.cli.at("out").get<std::string>();
  manifest.path = out / "manifest.json";
  manifest.seed = r.cli.value("seed", uint64_t{0});
  manifest.config = settings_json(r.settings);
  json req = r.req;
  req["network"] = r.net;
  char* result = nullptr;
  check(gmbi_analyze(req.dump().c_str(), &result));
  const json res = json::parse(take(result));

  std::ostringstream table;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %4s %16s %16s %10s %10s\n", "family", "n", "analytic_macs", "counted_macs",
                "params", "delta");
  table << line;
  for (const auto& row : res.at("rows")) {
    std::snprintf(line, sizeof(line), "%-12s %4lld %16lld %16lld %10lld %10.3g\n",
                  row.at("family").get<std::string>().c_str(), row.at("n").get<long long>(),
                  row.at("analytic_macs").get<long long>(), row.at("counted_macs").get<long long>(),
                  row.at("params").get<long long>(), row.at("delta").get<double>());
    table << line;
  }
  const auto& net = res.at("network");
  table << "\nnetwork at " << req.value("input_size", 512) << "x" << req.value("input_size", 512)
        << ": params " << net.at("params").get<long long>() << " (" << net.at("params").get<double>() / 1e6 << " M)"
        << ", macs " << net.at("macs").get<long long>() << " (" << net.at("macs").get<double>() / 1e9 << " G)"
        << ", reported flops " << net.at("flops").get<long long>() << " [" << net.at("flop_convention").get<std::string>()
        << "]\n";
  std::cout << table.str();
  write_file(out / "analyze.txt", table.str(), manifest);
  write_file(out / "analyze.json", res.dump(2) + "\n", manifest);
}

void run_bench(const Command& cmd, Manifest& manifest) {
  Resolved r = resolve(cmd, {{"size", "512"}, {"batch", "1"}, {"repeats", "10"}, {"warmup", "3"}, {"seed", "0"},
                             {"out", "runs/bench"}});
  const fs::path out = r.cli.at("out").get<std::string>();
  manifest.path = out / "manifest.json";
  manifest.seed = r.cli.at("seed").get<uint64_t>();
  manifest.config = settings_json(r.settings);
  if (r.cli.contains("threads")) gmbi_set_threads(r.cli.at("threads").get<int>());
  ModelPtr model = open_model(r, manifest.seed);
  char* result = nullptr;
  check(gmbi_bench(model.get(), r.req.at("size").get<int64_t>(), r.req.at("batch").get<int64_t>(),
                   r.req.at("repeats").get<int>(), r.req.at("warmup").get<int>(), manifest.seed, &result));
  const json res = json::parse(take(result));
  write_file(out / "bench.json", res.dump(2) + "\n", manifest);
  std::printf("input %s: mean %.2f ms, median %.2f ms, %.2f images/s over %lld runs (params %lld, macs %lld)\n",
              res.at("input").dump().c_str(), res.at("mean_ms").get<double>(), res.at("median_ms").get<double>(),
              res.at("images_per_second").get<double>(), res.at("repeats").get<long long>(),
              res.at("params").get<long long>(), res.at("macs").get<long long>());
}

void run_synth(const Command& cmd, Manifest& manifest) {
  Resolved r = resolve(cmd, {{"count", "8"}, {"size", "64"}, {"seed", "0"}, {"salt_pepper", "0.05"}, {"out", "data/synth"}});
  const fs::path out = r.cli.at("out").get<std::string>();
  manifest.path = out / "manifest.json";
  manifest.seed = r.cli.at("seed").get<uint64_t>();
  manifest.config = settings_json(r.settings);
  json req = r.req;
  req["seed"] = manifest.seed;
  req["out_dir"] = out.string();
  char* result = nullptr;
  check(gmbi_synth(req.dump().c_str(), &result));
  const json res = json::parse(take(result));
  manifest.artifacts.push_back((out / "images").string());
  manifest.artifacts.push_back((out / "masks").string());
  std::printf("wrote %zu samples to %s\n", res.at("samples").size(), out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GMBINet surface-defect saliency: train, evaluate, predict, analyze cost, benchmark, synthesize data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gmbi_version());

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& description) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->name = name;
    cmd->app = app.add_subcommand(name, description);
    cmd->app->add_option("--config", cmd->config_path, "config file: JSON object or key=value lines");
    commands.push_back(std::move(cmd));
    return *commands.back();
  };
  const OptionDef seed{"seed", Kind::integer, "seed for every random choice", "cli.seed"};
  const OptionDef threads{"threads", Kind::integer, "worker threads (overrides GMBI_THREADS)", "cli.threads"};
  const OptionDef checkpoint{"checkpoint", Kind::text, "model checkpoint", "cli.checkpoint"};

  Command& train = make("train", "train a saliency network");
  train.declare({seed, threads,
                 {"profile", Kind::text, "auto (desk for --synthetic, paper otherwise), desk or paper", "cli.profile"},
                 {"iters", Kind::integer, "training iterations", "req.iterations"},
                 {"batch", Kind::integer, "batch size", "req.batch"},
                 {"lr", Kind::real, "initial learning rate", "req.lr"},
                 {"lr_floor", Kind::real, "cosine annealing floor", "req.lr_floor"},
                 {"size", Kind::integer, "training image size", "req.size"},
                 {"checkpoint_every", Kind::integer, "steps between last.ckpt writes (0: end only)", "req.checkpoint_every"},
                 {"eval_every", Kind::integer, "steps between evaluations (0: end only)", "req.eval_every"},
                 {"alpha", Kind::real_list, "deep-supervision weights, one per stage", "req.alpha"},
                 {"side_resolution", Kind::text, "upsample_maps or downsample_labels", "req.side_resolution"},
                 {"no_augment", Kind::boolean, "disable augmentation", "req.augment", true, false},
                 {"out", Kind::text, "run directory", "cli.out"},
                 {"resume", Kind::text, "training checkpoint to resume from", "cli.resume"},
                 {"log_every", Kind::integer, "progress line cadence on stderr", "cli.log_every"}});
  train.declare(data_options());
  train.declare(network_options());

  Command& eval = make("eval", "evaluate a checkpoint on a dataset");
  eval.declare({seed, threads, checkpoint,
                {"size", Kind::integer, "inference size (default: training size, else 512)", "req.size"},
                {"threshold", Kind::real, "binarization threshold", "req.threshold"},
                {"dump_pred", Kind::text, "directory for prediction PNGs", "cli.dump_pred"},
                {"out", Kind::text, "report directory", "cli.out"}});
  eval.declare(data_options());
  eval.declare(network_options());

  Command& predict = make("predict", "predict saliency maps for PNG images");
  predict.declare({seed, threads, checkpoint,
                   {"input", Kind::text, "PNG file or directory of PNGs", "cli.input"},
                   {"output", Kind::text, "output PNG file or directory", "cli.output"},
                   {"size", Kind::integer, "inference size (default 512)", "req.size"}});
  predict.declare(network_options());

  Command& analyze = make("analyze", "analytic and counted computational cost");
  analyze.app->set_help_flag("--help", "Print this help message and exit");  // frees -h for --h
  analyze.declare({seed,
                   {"k", Kind::integer, "kernel size", "req.k"},
                   {"c", Kind::integer, "channels", "req.c"},
                   {"h", Kind::integer, "feature height", "req.h"},
                   {"w", Kind::integer, "feature width", "req.w"},
                   {"n", Kind::int_list, "scale dimensions", "req.n"},
                   {"families", Kind::text_list, "cost families: dsconv,multibranch,mi,gmbi", "req.families"},
                   {"input_size", Kind::integer, "network input size for the counted totals", "req.input_size"},
                   {"flops_x2", Kind::boolean, "report FLOPs as 2 x MACs", "req.flops_x2", true, true},
                   {"breakdown", Kind::boolean, "include the per-node breakdown", "req.breakdown", true, true},
                   {"out", Kind::text, "report directory", "cli.out"}});
  analyze.declare(network_options());

  Command& bench = make("bench", "measure inference latency");
  bench.declare({seed, threads, checkpoint,
                 {"size", Kind::integer, "input size", "req.size"},
                 {"batch", Kind::integer, "batch size", "req.batch"},
                 {"repeats", Kind::integer, "timed runs (>= 10)", "req.repeats"},
                 {"warmup", Kind::integer, "warm-up runs (>= 3)", "req.warmup"},
                 {"out", Kind::text, "report directory", "cli.out"}});
  bench.declare(network_options());

  Command& synth = make("synth", "generate a synthetic defect dataset");
  synth.declare({seed,
                 {"count", Kind::integer, "number of samples", "req.count"},
                 {"size", Kind::integer, "canvas size (>= 64)", "req.size"},
                 {"salt_pepper", Kind::real, "salt-and-pepper probability", "req.salt_pepper"},
                 {"out", Kind::text, "dataset directory", "cli.out"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const std::map<std::string, void (*)(const Command&, Manifest&)> runners{
      {"train", run_train}, {"eval", run_eval},   {"predict", run_predict},
      {"analyze", run_analyze}, {"bench", run_bench}, {"synth", run_synth}};
  for (const auto& cmd : commands) {
    if (!cmd->app->parsed()) continue;
    Manifest manifest;
    manifest.command = cmd->name;
    manifest.argv.assign(argv, argv + argc);
    manifest.hardware = hardware_line();
    manifest.started_at = now_utc();
    int code = kExitOk;
    std::string error;
    try {
      runners.at(cmd->name)(*cmd, manifest);
    } catch (const CommandError& e) {
      code = e.code;
      error = e.message;
    } catch (const std::exception& e) {
      code = kExitFailure;
      error = e.what();
    }
    if (!error.empty()) std::fprintf(stderr, "error: %s\n", error.c_str());
    try {
      write_manifest(manifest, code, error);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: manifest not written: %s\n", e.what());
    }
    return code;
  }
  return kExitUsage;
}
