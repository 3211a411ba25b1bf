// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gmbinet/data.hpp"
#include "gmbinet/loss.hpp"
#include "gmbinet/metrics.hpp"
#include "gmbinet/network.hpp"

namespace gmbinet {

struct TrainConfig {
  int64_t iterations = 50000;
  int64_t batch = 32;
  double lr = 4e-3;
  double lr_floor = 0.0;
  int64_t size = 512;
  uint64_t seed = 0;
  int64_t checkpoint_every = 1000;  ///< 0: only the final "last" checkpoint
  int64_t eval_every = 1000;        ///< 0: evaluate once at the end
  LossWeights weights;
  SideResolution side_resolution = SideResolution::upsample_maps;
  bool augment = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  /// 64x64 inputs, batch 4, 3000 iterations.
  static TrainConfig desk();
};

/// Cosine annealing: floor + (base - floor) (1 + cos(pi step / iterations)) / 2.
double lr_at(int64_t step, const TrainConfig& cfg);

struct TrainState {
  int64_t step = 0;  ///< completed updates
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  double lr = 0.0;
  double last_loss = 0.0;

  static TrainState fresh(const ParameterSet<float>& params);
};

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
  std::vector<double> per_stage;
  Tensor final_map;  ///< training-mode prediction for the batch
};

/// Forward, deep-supervision loss, backward and one Adam update at lr_at(state.step).
/// Gradients stay in params until the next step. Throws NumericError (with
/// the step, lr and per-stage losses) on a non-finite loss, before any update.
StepResult train_step(Model& model, TrainState& state, const TrainConfig& cfg, const Tensor& images,
                      const Tensor& masks);

/// Sample indices of a training step. Epoch e is a seeded permutation of the
/// dataset; steps read the concatenated permutations, so a dataset smaller
/// than the batch simply wraps into the next reshuffled epoch.
std::vector<std::size_t> batch_indices(int64_t step, int64_t batch, std::size_t dataset_size, uint64_t seed);

/// Eval-mode metrics; images are standardized here and must already have a
/// size divisible by the encoder reduction.
MetricReport evaluate(Model& model, const std::vector<Sample>& samples, double threshold = 0.5,
                      std::vector<MetricReport>* per_image = nullptr);

void save_training_checkpoint(const Model& model, const TrainState& state, const TrainConfig& cfg,
                              const std::filesystem::path& path);
/// Restores weights, moments and step; throws IncompatibleError on mismatch.
void load_training_checkpoint(const std::filesystem::path& path, Model& model, TrainState& state);

struct LogRow {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double mae = 0.0;
  double iou = 0.0;
};

struct FitOptions {
  std::filesystem::path out_dir;                 ///< train_log.csv, eval_log.csv, best.ckpt, last.ckpt
  std::filesystem::path resume_from;             ///< optional training checkpoint
  std::function<void(const LogRow&)> on_row;     ///< progress callback
};

struct FitResult {
  std::vector<LogRow> rows;
  double first_loss = 0.0;
  double final_loss = 0.0;
  double best_iou = -1.0;
  MetricReport final_eval;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path log_path;
};

/// Trains for cfg.iterations (from the resumed step, if any). Samples are
/// resized to cfg.size. Each log row holds the batch loss and the batch's
/// training-mode MAE/IoU; held-out evaluation (or the training set when
/// eval is empty) runs every cfg.eval_every steps and at the end.
FitResult fit(Model& model, const TrainConfig& cfg, const std::vector<Sample>& train, const std::vector<Sample>& eval,
              const FitOptions& options);

/// FNV-1a over the bits of every parameter value; used for determinism checks.
uint64_t weights_hash(const ParameterSet<float>& params);

}  // namespace gmbinet
