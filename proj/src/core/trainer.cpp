// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gmbinet/checkpoint.hpp"
#include "gmbinet/errors.hpp"
#include "gmbinet/ops.hpp"

namespace gmbinet {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (batch < 1) throw ConfigError("batch size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (!(lr_floor >= 0.0) || lr_floor > lr) throw ConfigError("learning-rate floor must lie in [0, lr]");
  if (size < 1) throw ConfigError("training size must be positive");
  if (checkpoint_every < 0 || eval_every < 0) throw ConfigError("checkpoint/eval cadence must be non-negative");
  weights.validate();
}

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.iterations = 3000;
  cfg.batch = 4;
  cfg.size = 64;
  cfg.checkpoint_every = 0;
  cfg.eval_every = 0;
  return cfg;
}

double lr_at(int64_t step, const TrainConfig& cfg) {
  const int64_t s = std::clamp<int64_t>(step, 0, cfg.iterations);
  const double phase = std::numbers::pi * static_cast<double>(s) / static_cast<double>(cfg.iterations);
  return cfg.lr_floor + 0.5 * (cfg.lr - cfg.lr_floor) * (1.0 + std::cos(phase));
}

TrainState TrainState::fresh(const ParameterSet<float>& params) {
  TrainState st;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = params.trainable(i) ? static_cast<std::size_t>(params.at(i).numel()) : 0;
    st.m.emplace_back(n, 0.0f);
    st.v.emplace_back(n, 0.0f);
  }
  return st;
}

StepResult train_step(Model& model, TrainState& state, const TrainConfig& cfg, const Tensor& images,
                      const Tensor& masks) {
  if (model.num_classes != 0) throw ConfigError("train_step needs a saliency model");
  if (state.m.size() != model.params.size()) throw ConfigError("optimizer state does not match the model");
  model.params.zero_grad();
  // running statistics change during the forward pass; keep them for a halt
  std::vector<std::vector<float>> stats;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    if (!model.params.trainable(i)) stats.emplace_back(model.params.at(i).data().begin(), model.params.at(i).data().end());
  }
  Tape<float> tape;
  const auto outputs = forward_saliency(images, model.graph, model.params, Mode::train, &tape);
  LossWeights weights = cfg.weights;
  if (weights.alpha.size() != outputs.side_maps.size()) {
    // a shorter network keeps the leading coefficients
    weights.alpha.resize(outputs.side_maps.size(), 1.0);
  }
  const auto loss = total_loss(outputs, masks, weights, &tape, cfg.side_resolution);
  StepResult result;
  result.loss = static_cast<double>(loss.total.item());
  result.per_stage = loss.per_stage;
  result.lr = lr_at(state.step, cfg);
  result.final_map = outputs.final_map;
  if (!std::isfinite(result.loss)) {
    std::ostringstream os;
    os << "non-finite loss at step " << state.step + 1 << " (lr " << result.lr << "); per-stage losses:";
    for (const double v : result.per_stage) os << ' ' << v;
    std::size_t k = 0;
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      if (model.params.trainable(i)) continue;
      std::copy(stats[k].begin(), stats[k].end(), model.params.at(i).mutable_data().begin());
      ++k;
    }
    throw NumericError(os.str());
  }
  tape.backward(loss.total);

  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    if (!model.params.trainable(i)) continue;
    Tensor& p = model.params.at(i);
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = result.lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.adam_eps);
      w[j] = static_cast<float>(static_cast<double>(w[j]) - update);
    }
  }
  ++state.step;
  state.lr = result.lr;
  state.last_loss = result.loss;
  return result;
}

std::vector<std::size_t> batch_indices(int64_t step, int64_t batch, std::size_t dataset_size, uint64_t seed) {
  if (dataset_size == 0) throw ConfigError("cannot batch an empty dataset");
  std::vector<std::size_t> out;
  int64_t cached_epoch = -1;
  std::vector<std::size_t> perm;
  for (int64_t j = 0; j < batch; ++j) {
    const int64_t pos = step * batch + j;
    const int64_t epoch = pos / static_cast<int64_t>(dataset_size);
    if (epoch != cached_epoch) {
      perm.resize(dataset_size);
      for (std::size_t i = 0; i < dataset_size; ++i) perm[i] = i;
      std::mt19937_64 rng(derive_seed(seed, "epoch" + std::to_string(epoch)));
      // Fisher-Yates with raw generator bits for portability
      for (std::size_t i = dataset_size - 1; i > 0; --i) {
        const std::size_t k = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(perm[i], perm[k]);
      }
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<std::size_t>(pos % static_cast<int64_t>(dataset_size))]);
  }
  return out;
}

MetricReport evaluate(Model& model, const std::vector<Sample>& samples, double threshold,
                      std::vector<MetricReport>* per_image) {
  if (samples.empty()) throw ConfigError("evaluation set is empty");
  std::vector<MetricReport> reports;
  std::vector<int64_t> pixels;
  for (const auto& s : samples) {
    const auto out = forward_saliency(standardize(s.image), model.graph, model.params, Mode::eval);
    reports.push_back(segmentation_metrics(out.final_map, s.mask, threshold));
    pixels.push_back(s.mask.numel());
  }
  if (per_image != nullptr) *per_image = reports;
  return merge_reports(reports, pixels);
}

namespace {

std::string training_metadata(const Model& model, const TrainState& state, const TrainConfig& cfg) {
  auto j = nlohmann::ordered_json::parse(encode_model_config(model.config, model.num_classes));
  j["step"] = state.step;
  j["train_size"] = cfg.size;
  j["last_loss"] = state.last_loss;
  return j.dump();
}

std::string format_row(const LogRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(r.step), r.lr, r.loss, r.mae,
                r.iou);
  return buf;
}

}  // namespace

void save_training_checkpoint(const Model& model, const TrainState& state, const TrainConfig& cfg,
                              const fs::path& path) {
  Checkpoint ckpt = make_checkpoint(model.graph, model.params, training_metadata(model, state, cfg));
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    if (!model.params.trainable(i)) continue;
    const Shape s = model.params.at(i).shape();
    ckpt.names.push_back("adam.m/" + model.params.name(i));
    ckpt.tensors.emplace_back(s, state.m[i]);
    ckpt.names.push_back("adam.v/" + model.params.name(i));
    ckpt.tensors.emplace_back(s, state.v[i]);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(ckpt, path);
}

void load_training_checkpoint(const fs::path& path, Model& model, TrainState& state) {
  const Checkpoint ckpt = load_checkpoint(path);
  apply_checkpoint(ckpt, model.graph, model.params);
  state = TrainState::fresh(model.params);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    if (!model.params.trainable(i)) continue;
    const Tensor* m = ckpt.find("adam.m/" + model.params.name(i));
    const Tensor* v = ckpt.find("adam.v/" + model.params.name(i));
    if (m == nullptr || v == nullptr) {
      throw IncompatibleError(path.string() + " has no optimizer state for '" + model.params.name(i) + "'");
    }
    state.m[i].assign(m->data().begin(), m->data().end());
    state.v[i].assign(v->data().begin(), v->data().end());
  }
  try {
    const auto j = nlohmann::json::parse(ckpt.metadata);
    state.step = j.at("step").get<int64_t>();
    state.last_loss = j.value("last_loss", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleError(path.string() + " is not a training checkpoint: " + e.what());
  }
}

FitResult fit(Model& model, const TrainConfig& cfg, const std::vector<Sample>& train, const std::vector<Sample>& eval,
              const FitOptions& options) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  std::vector<Sample> train_set, eval_set;
  for (const auto& s : train) train_set.push_back(resize_sample(s, cfg.size, cfg.size));
  for (const auto& s : eval.empty() ? train : eval) eval_set.push_back(resize_sample(s, cfg.size, cfg.size));

  TrainState state = TrainState::fresh(model.params);
  if (!options.resume_from.empty()) load_training_checkpoint(options.resume_from, model, state);
  if (state.step > cfg.iterations) throw ConfigError("checkpoint step exceeds the iteration budget");

  FitResult result;
  fs::create_directories(options.out_dir);
  result.log_path = options.out_dir / "train_log.csv";
  result.best_checkpoint = options.out_dir / "best.ckpt";
  result.last_checkpoint = options.out_dir / "last.ckpt";
  const bool fresh_log = state.step == 0;
  std::ofstream log(result.log_path, fresh_log ? std::ios::trunc : std::ios::app);
  std::ofstream eval_log(options.out_dir / "eval_log.csv", fresh_log ? std::ios::trunc : std::ios::app);
  if (!log || !eval_log) throw IoError("cannot write logs in " + options.out_dir.string());
  if (fresh_log) {
    log << "step,lr,loss,mae,iou\n";
    eval_log << "step,mae,iou,or,precision,recall,f_measure\n";
  }

  auto run_eval = [&](int64_t step) {
    const MetricReport r = evaluate(model, eval_set);
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(step), r.mae, r.iou,
                  r.overlap_ratio, r.precision, r.recall, r.f_measure);
    eval_log << buf << std::flush;
    if (r.iou > result.best_iou) {
      result.best_iou = r.iou;
      save_training_checkpoint(model, state, cfg, result.best_checkpoint);
    }
    return r;
  };

  while (state.step < cfg.iterations) {
    const auto idx = batch_indices(state.step, cfg.batch, train_set.size(), cfg.seed);
    std::vector<Tensor> images, masks;
    for (const std::size_t i : idx) {
      const Sample& s = train_set[i];
      const Sample a = cfg.augment ? augment(s, derive_seed(derive_seed(cfg.seed, s.id), static_cast<uint64_t>(state.step)))
                                   : normalize_sample(s);
      images.push_back(a.image);
      masks.push_back(a.mask);
    }
    const Tensor batch_masks = stack_batch(masks);
    StepResult step;
    try {
      step = train_step(model, state, cfg, stack_batch(images), batch_masks);
    } catch (const NumericError&) {
      save_training_checkpoint(model, state, cfg, options.out_dir / "halted.ckpt");
      throw;
    }
    const MetricReport m = segmentation_metrics(step.final_map, batch_masks);
    const LogRow row{state.step, step.lr, step.loss, m.mae, m.iou};
    if (result.rows.empty()) result.first_loss = step.loss;
    result.rows.push_back(row);
    log << format_row(row) << '\n';
    if (options.on_row) options.on_row(row);
    if (cfg.eval_every > 0 && state.step % cfg.eval_every == 0 && state.step < cfg.iterations) run_eval(state.step);
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      save_training_checkpoint(model, state, cfg, result.last_checkpoint);
    }
  }
  log.flush();
  result.final_eval = run_eval(state.step);
  save_training_checkpoint(model, state, cfg, result.last_checkpoint);
  result.final_loss = result.rows.empty() ? state.last_loss : result.rows.back().loss;
  return result;
}

uint64_t weights_hash(const ParameterSet<float>& params) {
  uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const float f : params.at(i).data()) {
      uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xFFu;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

}  // namespace gmbinet
